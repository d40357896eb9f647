#include "jsae/cli.hpp"

int main(int argc, char** argv) { return jsae::run_cli(argc, argv); }

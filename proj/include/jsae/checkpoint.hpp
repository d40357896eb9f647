#pragma once

// Plain-text checkpoint: named networks and vectors, values printed with 17
// significant digits so a save/load round trip is bit-exact.
//
//   jsae-checkpoint 1
//   meta <key> <value>
//   net <name> <layer count>
//   layer <in> <out> <tanh|identity>
//   <in*out weights, row-major, space separated>
//   <out biases>
//   vector <name> <length>
//   <values>
//   end

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "jsae/errors.hpp"
#include "jsae/nn.hpp"

namespace jsae {

struct Checkpoint {
  std::map<std::string, std::string> meta;
  std::map<std::string, Mlp> nets;
  std::map<std::string, std::vector<double>> vectors;

  const Mlp& net(const std::string& name) const {
    auto it = nets.find(name);
    if (it == nets.end()) throw ConfigError("checkpoint has no network '" + name + "'");
    return it->second;
  }
};

namespace detail {

inline void write_values(std::ostream& out, const std::vector<double>& values) {
  char buf[32];
  for (std::size_t i = 0; i < values.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.17g", values[i]);
    if (i) out << ' ';
    out << buf;
  }
  out << '\n';
}

inline std::vector<double> read_values(std::istream& in, std::size_t n, const std::string& what) {
  std::vector<double> v(n);
  for (auto& x : v) {
    std::string tok;
    if (!(in >> tok)) throw ConfigError("checkpoint truncated while reading " + what);
    try {
      x = std::stod(tok);
    } catch (const std::exception&) {
      throw ConfigError("checkpoint: bad number '" + tok + "' in " + what);
    }
  }
  return v;
}

}  // namespace detail

inline void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write checkpoint '" + path.string() + "'");
  out << "jsae-checkpoint 1\n";
  for (const auto& [k, v] : ckpt.meta) out << "meta " << k << ' ' << v << '\n';
  for (const auto& [name, net] : ckpt.nets) {
    out << "net " << name << ' ' << net.layers.size() << '\n';
    for (const auto& l : net.layers) {
      out << "layer " << l.in << ' ' << l.out << ' ' << to_string(l.activation) << '\n';
      detail::write_values(out, l.weight);
      detail::write_values(out, l.bias);
    }
  }
  for (const auto& [name, v] : ckpt.vectors) {
    out << "vector " << name << ' ' << v.size() << '\n';
    detail::write_values(out, v);
  }
  out << "end\n";
  if (!out) throw std::runtime_error("error writing checkpoint '" + path.string() + "'");
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open checkpoint '" + path.string() + "'");
  std::string magic;
  int version = 0;
  if (!(in >> magic >> version) || magic != "jsae-checkpoint" || version != 1) {
    throw ConfigError("'" + path.string() + "' is not a version-1 checkpoint");
  }
  Checkpoint ckpt;
  std::string tag;
  while (in >> tag) {
    if (tag == "end") return ckpt;
    if (tag == "meta") {
      std::string key, value;
      in >> key;
      std::getline(in >> std::ws, value);
      ckpt.meta[key] = value;
    } else if (tag == "net") {
      std::string name;
      std::size_t count = 0;
      if (!(in >> name >> count)) throw ConfigError("checkpoint: malformed net header");
      Mlp net;
      for (std::size_t k = 0; k < count; ++k) {
        std::string ltag, act;
        Dense l;
        if (!(in >> ltag >> l.in >> l.out >> act) || ltag != "layer") {
          throw ConfigError("checkpoint: malformed layer header in net '" + name + "'");
        }
        l.activation = activation_from_string(act);
        l.weight = detail::read_values(in, l.in * l.out, name);
        l.bias = detail::read_values(in, l.out, name);
        net.layers.push_back(std::move(l));
      }
      net.validate();
      ckpt.nets[name] = std::move(net);
    } else if (tag == "vector") {
      std::string name;
      std::size_t n = 0;
      if (!(in >> name >> n)) throw ConfigError("checkpoint: malformed vector header");
      ckpt.vectors[name] = detail::read_values(in, n, name);
    } else {
      throw ConfigError("checkpoint: unknown record '" + tag + "'");
    }
  }
  throw ConfigError("checkpoint '" + path.string() + "' has no end marker");
}

}  // namespace jsae

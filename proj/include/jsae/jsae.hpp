#pragma once

#include "jsae/autoencoder.hpp"
#include "jsae/checkpoint.hpp"
#include "jsae/config.hpp"
#include "jsae/embedding.hpp"
#include "jsae/envs/gridworld.hpp"
#include "jsae/envs/recommender.hpp"
#include "jsae/envs/slotmachine.hpp"
#include "jsae/harness.hpp"
#include "jsae/nn.hpp"
#include "jsae/policy.hpp"
#include "jsae/replay_buffer.hpp"
#include "jsae/rng.hpp"
#include "jsae/theory.hpp"
#include "jsae/trainer.hpp"

#pragma once

#include "llmshape/checkpoint.hpp"
#include "llmshape/config.hpp"
#include "llmshape/errors.hpp"
#include "llmshape/evaluator.hpp"
#include "llmshape/harness.hpp"
#include "llmshape/kitchen.hpp"
#include "llmshape/logging.hpp"
#include "llmshape/metrics.hpp"
#include "llmshape/mlp.hpp"
#include "llmshape/noise.hpp"
#include "llmshape/obs_encode.hpp"
#include "llmshape/ppo.hpp"
#include "llmshape/prompt.hpp"
#include "llmshape/rng.hpp"
#include "llmshape/scripted.hpp"
#include "llmshape/shaping_gae.hpp"
#include "llmshape/shaping_loop.hpp"
#include "llmshape/trainer.hpp"

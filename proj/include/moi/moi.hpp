#pragma once

#include "moi/embedding.hpp"
#include "moi/error.hpp"
#include "moi/experiments.hpp"
#include "moi/mix_core.hpp"
#include "moi/pipeline.hpp"
#include "moi/prompt_blend.hpp"
#include "moi/rng.hpp"
#include "moi/sampler.hpp"
#include "moi/toy_lm.hpp"
#include "moi/trace.hpp"
#include "moi/weights_io.hpp"

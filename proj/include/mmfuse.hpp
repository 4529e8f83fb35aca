#pragma once

#include "mmfuse/adam.hpp"
#include "mmfuse/analysis.hpp"
#include "mmfuse/catalog.hpp"
#include "mmfuse/checkpoint.hpp"
#include "mmfuse/commands.hpp"
#include "mmfuse/dataset.hpp"
#include "mmfuse/error.hpp"
#include "mmfuse/example.hpp"
#include "mmfuse/fusion.hpp"
#include "mmfuse/gradcheck.hpp"
#include "mmfuse/log.hpp"
#include "mmfuse/matrix.hpp"
#include "mmfuse/metrics.hpp"
#include "mmfuse/model.hpp"
#include "mmfuse/model_config.hpp"
#include "mmfuse/params.hpp"
#include "mmfuse/preprocess.hpp"
#include "mmfuse/rng.hpp"
#include "mmfuse/synth.hpp"
#include "mmfuse/tape.hpp"
#include "mmfuse/train.hpp"
#include "mmfuse/train_config.hpp"

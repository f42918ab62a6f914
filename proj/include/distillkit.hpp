#pragma once

#include "distillkit/corpus.hpp"
#include "distillkit/distill.hpp"
#include "distillkit/error.hpp"
#include "distillkit/experiment.hpp"
#include "distillkit/hypertune.hpp"
#include "distillkit/losses.hpp"
#include "distillkit/metrics.hpp"
#include "distillkit/model.hpp"
#include "distillkit/parallel.hpp"
#include "distillkit/predictions.hpp"
#include "distillkit/random.hpp"
#include "distillkit/stats.hpp"
#include "distillkit/synthetic.hpp"
#include "distillkit/tensor.hpp"
#include "distillkit/version.hpp"

#pragma once

#include "automr/awd.hpp"
#include "automr/checkpoint.hpp"
#include "automr/conv.hpp"
#include "automr/dataset.hpp"
#include "automr/error.hpp"
#include "automr/events.hpp"
#include "automr/manifest.hpp"
#include "automr/metrics.hpp"
#include "automr/model.hpp"
#include "automr/ops.hpp"
#include "automr/report.hpp"
#include "automr/rng.hpp"
#include "automr/runtime.hpp"
#include "automr/schema.hpp"
#include "automr/synthetic.hpp"
#include "automr/tape.hpp"
#include "automr/tensor.hpp"
#include "automr/trainer.hpp"
#include "automr/tune/tuner.hpp"
#include "automr/version.hpp"

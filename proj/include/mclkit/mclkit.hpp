#pragma once

#include "mclkit/errors.hpp"
#include "mclkit/tensor.hpp"
#include "mclkit/svd.hpp"
#include "mclkit/rng.hpp"
#include "mclkit/layers.hpp"
#include "mclkit/stack.hpp"
#include "mclkit/losses.hpp"
#include "mclkit/gradcheck.hpp"
#include "mclkit/optimize.hpp"
#include "mclkit/trainer.hpp"
#include "mclkit/sample_set.hpp"
#include "mclkit/models.hpp"
#include "mclkit/binary_io.hpp"
#include "mclkit/checkpoint.hpp"
#include "mclkit/dataset.hpp"
#include "mclkit/metrics.hpp"
#include "mclkit/distill.hpp"
#include "mclkit/evaluate.hpp"
#include "mclkit/config.hpp"

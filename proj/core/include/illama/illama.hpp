#pragma once

#include "illama/analysis.hpp"
#include "illama/attention.hpp"
#include "illama/augment.hpp"
#include "illama/checkpoint.hpp"
#include "illama/config.hpp"
#include "illama/dataset.hpp"
#include "illama/errors.hpp"
#include "illama/evaluate.hpp"
#include "illama/gradcheck.hpp"
#include "illama/io_util.hpp"
#include "illama/layers.hpp"
#include "illama/loss.hpp"
#include "illama/model.hpp"
#include "illama/ops.hpp"
#include "illama/optim.hpp"
#include "illama/schedule.hpp"
#include "illama/svd.hpp"
#include "illama/tape.hpp"
#include "illama/tensor.hpp"
#include "illama/training.hpp"

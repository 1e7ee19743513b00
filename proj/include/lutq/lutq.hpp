#pragma once

#include "lutq/baselines.hpp"
#include "lutq/bench.hpp"
#include "lutq/codebook.hpp"
#include "lutq/dense_matrix.hpp"
#include "lutq/error.hpp"
#include "lutq/gram_cholesky.hpp"
#include "lutq/half.hpp"
#include "lutq/layer_io.hpp"
#include "lutq/lut_kernel.hpp"
#include "lutq/outliers.hpp"
#include "lutq/parallel.hpp"
#include "lutq/report.hpp"
#include "lutq/solver.hpp"
#include "lutq/synthetic.hpp"

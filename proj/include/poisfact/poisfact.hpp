#pragma once

#include "poisfact/errors.hpp"
#include "poisfact/evaluator.hpp"
#include "poisfact/factor_matrix.hpp"
#include "poisfact/model_io.hpp"
#include "poisfact/parallel.hpp"
#include "poisfact/poisson_core.hpp"
#include "poisfact/report_io.hpp"
#include "poisfact/sparse_data.hpp"
#include "poisfact/trainer.hpp"
#include "poisfact/vector_solvers.hpp"

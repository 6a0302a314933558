#pragma once

// Umbrella header.

#include "kdreplica/core/dataset.hpp"
#include "kdreplica/core/losses.hpp"
#include "kdreplica/core/params.hpp"
#include "kdreplica/erm/lbfgs.hpp"
#include "kdreplica/erm/measure.hpp"
#include "kdreplica/erm/train.hpp"
#include "kdreplica/estimators/classifier.hpp"
#include "kdreplica/estimators/estimators.hpp"
#include "kdreplica/harness/compare.hpp"
#include "kdreplica/harness/config.hpp"
#include "kdreplica/harness/csv.hpp"
#include "kdreplica/harness/optimize.hpp"
#include "kdreplica/harness/output.hpp"
#include "kdreplica/harness/sweep.hpp"
#include "kdreplica/replica/bo_kd.hpp"
#include "kdreplica/replica/kd.hpp"
#include "kdreplica/replica/prox.hpp"
#include "kdreplica/replica/quadrature.hpp"
#include "kdreplica/replica/solver_common.hpp"
#include "kdreplica/replica/stationarity.hpp"
#include "kdreplica/replica/teacher.hpp"

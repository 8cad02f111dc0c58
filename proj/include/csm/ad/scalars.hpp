#pragma once

#include "csm/ad/dual.hpp"
#include "csm/ad/tape.hpp"

/// Applies X to every scalar type the models are instantiated for: plain
/// values, one- and two-level duals, and tape variables over each of them.
#define CSM_FOR_EACH_SCALAR(X)      \
  X(double)                         \
  X(::csm::ad::Dual1)               \
  X(::csm::ad::Dual2)               \
  X(::csm::ad::Var<double>)         \
  X(::csm::ad::Var<::csm::ad::Dual1>) \
  X(::csm::ad::Var<::csm::ad::Dual2>)

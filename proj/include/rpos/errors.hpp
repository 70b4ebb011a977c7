#pragma once

#include <stdexcept>
#include <string>

namespace rpos {

// Base class for all library errors.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Input could not be parsed. CLI maps this to exit code 2.
struct ParseError : Error {
  using Error::Error;
};

// A documented precondition was violated. CLI maps this to exit code 3.
struct PreconditionError : Error {
  using Error::Error;
};

#define RPOS_DEFINE_ERROR(Name)                       \
  struct Name : PreconditionError {                   \
    using PreconditionError::PreconditionError;       \
  }

RPOS_DEFINE_ERROR(NotIrreducible);
RPOS_DEFINE_ERROR(NonpositiveWeight);
RPOS_DEFINE_ERROR(EdgeNotInSupport);
RPOS_DEFINE_ERROR(EmptyComponent);
RPOS_DEFINE_ERROR(EdgeNotInSubgraph);
RPOS_DEFINE_ERROR(VertexHasEdges);
RPOS_DEFINE_ERROR(VertexNotInSubgraph);
RPOS_DEFINE_ERROR(NoSignChange);
RPOS_DEFINE_ERROR(OutsideDomain);
RPOS_DEFINE_ERROR(BoundaryNotFinite);
RPOS_DEFINE_ERROR(ZeroDiagonalPower);
RPOS_DEFINE_ERROR(NoBracket);
RPOS_DEFINE_ERROR(Divergent);
RPOS_DEFINE_ERROR(NotEigenpair);
RPOS_DEFINE_ERROR(RowSumViolation);
RPOS_DEFINE_ERROR(NotRTransient);
RPOS_DEFINE_ERROR(NotStronglyPositiveRecurrent);
RPOS_DEFINE_ERROR(WindowTooSmall);
RPOS_DEFINE_ERROR(SupportMismatch);
RPOS_DEFINE_ERROR(NotDominated);
RPOS_DEFINE_ERROR(NotDominating);
RPOS_DEFINE_ERROR(NotSubprobability);
RPOS_DEFINE_ERROR(NoConvergence);
RPOS_DEFINE_ERROR(LimitExceeded);
RPOS_DEFINE_ERROR(BadParameter);

#undef RPOS_DEFINE_ERROR

}  // namespace rpos

#pragma once

#include <stdexcept>
#include <string>

namespace adp {

// Base class for all toolkit errors.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DimensionMismatch : Error {
  using Error::Error;
};
struct NonPsdCost : Error {
  using Error::Error;
};
struct DiscountOutOfRange : Error {
  using Error::Error;
};
struct EmptyBox : Error {
  using Error::Error;
};
struct InvalidDt : Error {
  using Error::Error;
};
struct NoConvergence : Error {
  using Error::Error;
};
struct UnsupportedMeasure : Error {
  using Error::Error;
};
struct GridTooCoarse : Error {
  using Error::Error;
};
struct OutOfGrid : Error {
  using Error::Error;
};
struct NotStrictlyPositive : Error {
  using Error::Error;
};
struct NotLyapunov : Error {
  using Error::Error;
};
struct EmptySamples : Error {
  using Error::Error;
};
struct MaskMismatch : Error {
  using Error::Error;
};
struct NumericalBreakdown : Error {
  using Error::Error;
};
struct IterationLimit : Error {
  using Error::Error;
};
struct NonConvexTerminal : Error {
  using Error::Error;
};
struct ConfigError : Error {
  using Error::Error;
};

}  // namespace adp

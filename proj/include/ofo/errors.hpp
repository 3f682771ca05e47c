#pragma once

#include <Eigen/Core>

#include <stdexcept>
#include <string>

namespace ofo {

/// Base class for every error raised by the toolkit.
class Error : public std::runtime_error
{
public:
  using std::runtime_error::runtime_error;
};

class InvalidDimension : public Error
{
public:
  using Error::Error;
};

/// A value violates a documented invariant (asymmetric matrix, lower > upper, ...).
class InvalidArgument : public Error
{
public:
  using Error::Error;
};

class InvalidDual : public Error
{
public:
  using Error::Error;
};

class NotStrictlyConvex : public Error
{
public:
  using Error::Error;
};

class UnsupportedMarketMode : public Error
{
public:
  using Error::Error;
};

class PowerFlowDiverged : public Error
{
public:
  using Error::Error;
};

class SensitivitySingular : public Error
{
public:
  using Error::Error;
};

/// Scenario configuration failed validation. `field()` holds a JSON-pointer-like path.
class ConfigError : public Error
{
public:
  ConfigError(std::string field, const std::string & what)
      : Error(field + ": " + what), field_(std::move(field))
  {}

  const std::string & field() const noexcept { return field_; }

private:
  std::string field_;
};

}  // namespace ofo

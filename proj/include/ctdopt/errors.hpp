#pragma once

#include <stdexcept>
#include <string>

namespace ctdopt {

// Base of every error the library throws. `kind()` is the short tag used in
// the CLI's machine-readable error output.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& what)
      : std::runtime_error(what), kind_(std::move(kind)) {}
  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

struct ShapeError : Error {
  explicit ShapeError(const std::string& w) : Error("shape", w) {}
};
struct RangeError : Error {
  explicit RangeError(const std::string& w) : Error("range", w) {}
};
struct CapacityError : Error {
  explicit CapacityError(const std::string& w) : Error("capacity", w) {}
};
struct NumericalError : Error {
  explicit NumericalError(const std::string& w) : Error("numerical", w) {}
};
struct DomainError : Error {
  explicit DomainError(const std::string& w) : Error("domain", w) {}
};
struct ConfigError : Error {
  explicit ConfigError(const std::string& w) : Error("config", w) {}
};
struct IoError : Error {
  explicit IoError(const std::string& w) : Error("io", w) {}
};

}  // namespace ctdopt

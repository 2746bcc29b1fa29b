#pragma once

#include <stdexcept>
#include <string>

namespace ope {

// Every failure carries a short machine-readable code next to the message.
class Error : public std::runtime_error {
 public:
  Error(std::string code, const std::string& what)
      : std::runtime_error(what), code_(std::move(code)) {}
  const std::string& code() const { return code_; }

 private:
  std::string code_;
};

class QuadratureError : public Error {
 public:
  QuadratureError(const std::string& what, double achieved)
      : Error("quadrature", what), achieved_(achieved) {}
  double achieved_tolerance() const { return achieved_; }

 private:
  double achieved_;
};

}  // namespace ope

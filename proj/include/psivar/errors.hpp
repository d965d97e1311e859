#pragma once

#include <stdexcept>
#include <string>

namespace psivar {

enum class ErrorKind {
  singularity,
  ill_conditioned_contour,
  separation,
  needs_subdivision,
  frame,
  evaluation,
  input,
  construction,
  positivity,
  composition,
  order,
  not_elliptic,
  no_order_reduction,
  resolution,
  shape,
  conditioning,
  contour,
  not_invertible_on_subbundle,
};

inline const char* kind_name(ErrorKind k) {
  switch (k) {
    case ErrorKind::singularity: return "singularity";
    case ErrorKind::ill_conditioned_contour: return "ill-conditioned-contour";
    case ErrorKind::separation: return "separation";
    case ErrorKind::needs_subdivision: return "needs-subdivision";
    case ErrorKind::frame: return "frame";
    case ErrorKind::evaluation: return "evaluation";
    case ErrorKind::input: return "input";
    case ErrorKind::construction: return "construction";
    case ErrorKind::positivity: return "positivity";
    case ErrorKind::composition: return "composition";
    case ErrorKind::order: return "order";
    case ErrorKind::not_elliptic: return "not-elliptic";
    case ErrorKind::no_order_reduction: return "no-order-reduction";
    case ErrorKind::resolution: return "resolution";
    case ErrorKind::shape: return "shape";
    case ErrorKind::conditioning: return "conditioning";
    case ErrorKind::contour: return "contour";
    case ErrorKind::not_invertible_on_subbundle: return "not-invertible-on-subbundle";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(kind_name(kind)) + ": " + what), kind_(kind) {}
  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace psivar

#pragma once

#include <stdexcept>
#include <string>

namespace bsjm {

struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Numerical failures exit with a distinct code at the command line.
struct NumericalError : Error {
  explicit NumericalError(const std::string& msg) : Error(msg) {}
};

#define BSJM_DEFINE_ERROR(Name)                                   \
  struct Name : Error {                                           \
    explicit Name(const std::string& msg) : Error(msg) {}         \
  }
#define BSJM_DEFINE_NUMERICAL_ERROR(Name)                               \
  struct Name : NumericalError {                                        \
    explicit Name(const std::string& msg) : NumericalError(msg) {}      \
  }

// spline
BSJM_DEFINE_ERROR(InvalidOrder);
BSJM_DEFINE_ERROR(DuplicateInteriorKnot);
BSJM_DEFINE_ERROR(OutOfDomain);

// model
BSJM_DEFINE_NUMERICAL_ERROR(NonPosDefCovariance);
BSJM_DEFINE_NUMERICAL_ERROR(ExponentOverflow);

// samplers
BSJM_DEFINE_NUMERICAL_ERROR(NotLogConcave);
BSJM_DEFINE_NUMERICAL_ERROR(BadInitialization);
BSJM_DEFINE_NUMERICAL_ERROR(NonFiniteDensity);
BSJM_DEFINE_ERROR(InvalidDof);
BSJM_DEFINE_ERROR(InvalidParameter);

// gibbs / diagnostics
BSJM_DEFINE_NUMERICAL_ERROR(NonPosDefScale);
BSJM_DEFINE_ERROR(InsufficientChains);
BSJM_DEFINE_ERROR(EmptySamples);
BSJM_DEFINE_ERROR(NoSubjectsAtRisk);

// data / io
BSJM_DEFINE_ERROR(MissingColumn);
BSJM_DEFINE_ERROR(UnknownSubject);
BSJM_DEFINE_ERROR(NonNumericField);
BSJM_DEFINE_ERROR(TimeAfterEvent);
BSJM_DEFINE_ERROR(IoError);

#undef BSJM_DEFINE_ERROR
#undef BSJM_DEFINE_NUMERICAL_ERROR

}  // namespace bsjm

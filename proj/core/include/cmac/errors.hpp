#pragma once

#include <stdexcept>
#include <string>

namespace cmac {

/// Base class for all library errors.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Embedding / similarity geometry.
struct DimensionMismatch : Error { using Error::Error; };
struct NonPositiveTemperature : Error { using Error::Error; };
struct NonUnitNorm : Error { using Error::Error; };
struct BatchTooSmall : Error { using Error::Error; };
struct InvalidClassIndex : Error { using Error::Error; };

// Kernels and MMD.
struct NonPositiveBandwidth : Error { using Error::Error; };
struct TooFewSamples : Error { using Error::Error; };

// Losses.
struct LengthMismatch : Error { using Error::Error; };

// Training.
struct NonFiniteLoss : Error { using Error::Error; };

// Cohort generation and splitting.
struct EmptySpec : Error { using Error::Error; };
struct UnknownSpec : Error { using Error::Error; };
struct BadFractions : Error { using Error::Error; };

// Fairness metrics.
struct NoEligibleSubgroups : Error { using Error::Error; };
struct DegeneratePopulation : Error { using Error::Error; };

// Statistics.
struct SingleClass : Error { using Error::Error; };
struct DegenerateVariance : Error { using Error::Error; };
struct AllZeroDifferences : Error { using Error::Error; };
struct DegeneratePooled : Error { using Error::Error; };
struct RetryCapExceeded : Error { using Error::Error; };

// File formats and pairing.
struct SchemaError : Error { using Error::Error; };
struct PairingMismatch : Error { using Error::Error; };

} // namespace cmac

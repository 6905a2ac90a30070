#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace sflock {

/// Raised when an argument lies inside the singular set of the kernel or
/// outside the domain of an operation.
class DomainError : public std::domain_error
{
  public:
    using std::domain_error::domain_error;
};

/// Domain error tied to a particle pair whose gap is not above delta.
class PairDomainError : public DomainError
{
  public:
    PairDomainError(std::size_t i, std::size_t j, double gap, double delta)
        : DomainError("pair (" + std::to_string(i) + "," + std::to_string(j) + ") has gap " +
                      std::to_string(gap) + " <= delta " + std::to_string(delta)),
          i_(i), j_(j), gap_(gap)
    {
    }

    std::size_t first() const noexcept { return i_; }
    std::size_t second() const noexcept { return j_; }
    double gap() const noexcept { return gap_; }

  private:
    std::size_t i_;
    std::size_t j_;
    double gap_;
};

/// Malformed configuration or parameter combination.
class ConfigError : public std::invalid_argument
{
  public:
    using std::invalid_argument::invalid_argument;
};

} // namespace sflock

#pragma once

// Software extended-precision binary floating point backed by MPFR.
//
// Every BigFloat created on a thread takes the thread's working precision
// (see PrecisionScope).  All arithmetic rounds to nearest, ties to even.

#include <mpfr.h>

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace shadowflow {

/// Precision of an orbit or an evaluation: hardware doubles or b-bit software
/// floats.  The b-bit form is what the library treats as "exact".
struct PrecisionSpec {
  enum class Kind { Standard64, Extended };

  Kind kind = Kind::Standard64;
  unsigned mantissa_bits = 2048;

  static PrecisionSpec standard() { return {}; }
  /// Throws std::invalid_argument if bits < 128.
  static PrecisionSpec extended(unsigned bits = 2048);

  bool is_extended() const { return kind == Kind::Extended; }
  std::string describe() const;

  friend bool operator==(const PrecisionSpec& a, const PrecisionSpec& b) {
    if (a.kind != b.kind) return false;
    return a.kind == Kind::Standard64 || a.mantissa_bits == b.mantissa_bits;
  }
};

inline constexpr unsigned kMinExtendedBits = 128;
inline constexpr unsigned kDefaultExtendedBits = 2048;

/// Working precision (mantissa bits) used for newly created BigFloat values on
/// the calling thread.  Defaults to 2048.
unsigned working_precision();

/// Sets the calling thread's working precision for its lifetime.
class PrecisionScope {
 public:
  explicit PrecisionScope(unsigned bits);
  ~PrecisionScope();
  PrecisionScope(const PrecisionScope&) = delete;
  PrecisionScope& operator=(const PrecisionScope&) = delete;

 private:
  unsigned previous_;
};

class BigFloat {
 public:
  BigFloat();
  BigFloat(double x);  // NOLINT(google-explicit-constructor): exact embedding
  BigFloat(int x);     // NOLINT(google-explicit-constructor)
  BigFloat(long x);    // NOLINT(google-explicit-constructor)
  explicit BigFloat(const std::string& decimal);

  BigFloat(const BigFloat& other);
  BigFloat(BigFloat&& other) noexcept;
  BigFloat& operator=(const BigFloat& other);
  BigFloat& operator=(BigFloat&& other) noexcept;
  BigFloat& operator=(double x);
  ~BigFloat();

  /// Round to nearest double.  Values outside the double range come back as
  /// +-inf; use demote() for the checked conversion.
  double to_double() const { return mpfr_get_d(value_, MPFR_RNDN); }
  explicit operator double() const { return to_double(); }

  unsigned precision() const { return static_cast<unsigned>(mpfr_get_prec(value_)); }
  bool is_finite() const { return mpfr_number_p(value_) != 0; }
  bool is_zero() const { return mpfr_zero_p(value_) != 0; }
  int sign() const { return mpfr_sgn(value_); }
  std::string to_string(int digits = 20) const;

  mpfr_ptr raw() { return value_; }
  mpfr_srcptr raw() const { return value_; }

  BigFloat& operator+=(const BigFloat& rhs);
  BigFloat& operator-=(const BigFloat& rhs);
  BigFloat& operator*=(const BigFloat& rhs);
  BigFloat& operator/=(const BigFloat& rhs);
  BigFloat& operator+=(double rhs);
  BigFloat& operator-=(double rhs);
  BigFloat& operator*=(double rhs);
  BigFloat& operator/=(double rhs);

  BigFloat operator-() const&;
  BigFloat operator-() &&;

  static BigFloat pi();

 private:
  struct Uninit {};
  explicit BigFloat(Uninit);

  void ensure_live();

  mpfr_t value_;

  friend BigFloat uninitialized_bigfloat();
};

BigFloat uninitialized_bigfloat();

// Binary arithmetic.  Rvalue overloads reuse the temporary's storage so long
// expressions allocate once.
BigFloat operator+(const BigFloat& a, const BigFloat& b);
BigFloat operator+(BigFloat&& a, const BigFloat& b);
BigFloat operator+(const BigFloat& a, BigFloat&& b);
BigFloat operator+(BigFloat&& a, BigFloat&& b);
BigFloat operator-(const BigFloat& a, const BigFloat& b);
BigFloat operator-(BigFloat&& a, const BigFloat& b);
BigFloat operator-(const BigFloat& a, BigFloat&& b);
BigFloat operator-(BigFloat&& a, BigFloat&& b);
BigFloat operator*(const BigFloat& a, const BigFloat& b);
BigFloat operator*(BigFloat&& a, const BigFloat& b);
BigFloat operator*(const BigFloat& a, BigFloat&& b);
BigFloat operator*(BigFloat&& a, BigFloat&& b);
BigFloat operator/(const BigFloat& a, const BigFloat& b);
BigFloat operator/(BigFloat&& a, const BigFloat& b);
BigFloat operator/(const BigFloat& a, BigFloat&& b);
BigFloat operator/(BigFloat&& a, BigFloat&& b);

BigFloat operator+(const BigFloat& a, double b);
BigFloat operator+(BigFloat&& a, double b);
BigFloat operator+(double a, const BigFloat& b);
BigFloat operator+(double a, BigFloat&& b);
BigFloat operator-(const BigFloat& a, double b);
BigFloat operator-(BigFloat&& a, double b);
BigFloat operator-(double a, const BigFloat& b);
BigFloat operator-(double a, BigFloat&& b);
BigFloat operator*(const BigFloat& a, double b);
BigFloat operator*(BigFloat&& a, double b);
BigFloat operator*(double a, const BigFloat& b);
BigFloat operator*(double a, BigFloat&& b);
BigFloat operator/(const BigFloat& a, double b);
BigFloat operator/(BigFloat&& a, double b);
BigFloat operator/(double a, const BigFloat& b);
BigFloat operator/(double a, BigFloat&& b);

inline int compare(const BigFloat& a, const BigFloat& b) { return mpfr_cmp(a.raw(), b.raw()); }
inline int compare(const BigFloat& a, double b) { return mpfr_cmp_d(a.raw(), b); }

inline bool operator==(const BigFloat& a, const BigFloat& b) { return mpfr_equal_p(a.raw(), b.raw()) != 0; }
inline bool operator<(const BigFloat& a, const BigFloat& b) { return mpfr_less_p(a.raw(), b.raw()) != 0; }
inline bool operator>(const BigFloat& a, const BigFloat& b) { return mpfr_greater_p(a.raw(), b.raw()) != 0; }
inline bool operator<=(const BigFloat& a, const BigFloat& b) { return mpfr_lessequal_p(a.raw(), b.raw()) != 0; }
inline bool operator>=(const BigFloat& a, const BigFloat& b) { return mpfr_greaterequal_p(a.raw(), b.raw()) != 0; }
inline bool operator==(const BigFloat& a, double b) { return compare(a, b) == 0; }
inline bool operator<(const BigFloat& a, double b) { return compare(a, b) < 0; }
inline bool operator>(const BigFloat& a, double b) { return compare(a, b) > 0; }
inline bool operator<=(const BigFloat& a, double b) { return compare(a, b) <= 0; }
inline bool operator>=(const BigFloat& a, double b) { return compare(a, b) >= 0; }

BigFloat abs(const BigFloat& x);
BigFloat sqrt(const BigFloat& x);
BigFloat exp(const BigFloat& x);
BigFloat log(const BigFloat& x);
BigFloat log1p(const BigFloat& x);
BigFloat expm1(const BigFloat& x);
BigFloat sin(const BigFloat& x);
BigFloat cos(const BigFloat& x);
BigFloat erfc(const BigFloat& x);
BigFloat floor(const BigFloat& x);
BigFloat fmax(const BigFloat& a, const BigFloat& b);
inline bool isfinite(const BigFloat& x) { return x.is_finite(); }

std::ostream& operator<<(std::ostream& os, const BigFloat& x);

using BigVector = std::vector<BigFloat>;

/// Lossless embedding of doubles into the given extended precision.
/// Throws std::invalid_argument unless spec is Extended.
BigVector promote(std::span<const double> x, const PrecisionSpec& spec);
/// Same, at the calling thread's working precision.
BigVector promote(std::span<const double> x);

/// Round-to-nearest-even back to doubles.  Throws std::overflow_error when a
/// coordinate leaves the double range.
std::vector<double> demote(std::span<const BigFloat> x);
double demote(const BigFloat& x);

}  // namespace shadowflow

#include "shadowflow/bigfloat.hpp"

#include "shadowflow/scalar.hpp"

#include <cmath>
#include <memory>
#include <ostream>
#include <stdexcept>

namespace shadowflow {

namespace {

thread_local unsigned tls_precision = kDefaultExtendedBits;

// A moved-from BigFloat has its limb pointer cleared; only the owner frees.
bool is_live(mpfr_srcptr v) { return v->_mpfr_d != nullptr; }

}  // namespace

PrecisionSpec PrecisionSpec::extended(unsigned bits) {
  if (bits < kMinExtendedBits)
    throw std::invalid_argument("extended precision needs at least 128 mantissa bits, got " +
                                std::to_string(bits));
  return {Kind::Extended, bits};
}

std::string PrecisionSpec::describe() const {
  if (kind == Kind::Standard64) return "float64";
  return "bigfloat" + std::to_string(mantissa_bits);
}

unsigned working_precision() { return tls_precision; }

PrecisionScope::PrecisionScope(unsigned bits) : previous_(tls_precision) {
  if (bits < MPFR_PREC_MIN || bits > MPFR_PREC_MAX)
    throw std::invalid_argument("precision out of range");
  tls_precision = bits;
}

PrecisionScope::~PrecisionScope() { tls_precision = previous_; }

BigFloat::BigFloat() {
  mpfr_init2(value_, tls_precision);
  mpfr_set_zero(value_, 1);
}

BigFloat::BigFloat(Uninit) { mpfr_init2(value_, tls_precision); }

BigFloat uninitialized_bigfloat() { return BigFloat(BigFloat::Uninit{}); }

BigFloat::BigFloat(double x) {
  mpfr_init2(value_, tls_precision);
  mpfr_set_d(value_, x, MPFR_RNDN);
}

BigFloat::BigFloat(int x) {
  mpfr_init2(value_, tls_precision);
  mpfr_set_si(value_, x, MPFR_RNDN);
}

BigFloat::BigFloat(long x) {
  mpfr_init2(value_, tls_precision);
  mpfr_set_si(value_, x, MPFR_RNDN);
}

BigFloat::BigFloat(const std::string& decimal) {
  mpfr_init2(value_, tls_precision);
  if (mpfr_set_str(value_, decimal.c_str(), 10, MPFR_RNDN) != 0)
    throw std::invalid_argument("not a decimal number: " + decimal);
}

BigFloat::BigFloat(const BigFloat& other) {
  mpfr_init2(value_, mpfr_get_prec(other.value_));
  mpfr_set(value_, other.value_, MPFR_RNDN);
}

BigFloat::BigFloat(BigFloat&& other) noexcept {
  *value_ = *other.value_;
  other.value_->_mpfr_d = nullptr;
}

BigFloat& BigFloat::operator=(const BigFloat& other) {
  if (this == &other) return *this;
  const mpfr_prec_t prec = mpfr_get_prec(other.value_);
  if (!is_live(value_))
    mpfr_init2(value_, prec);
  else if (mpfr_get_prec(value_) != prec)
    mpfr_set_prec(value_, prec);
  mpfr_set(value_, other.value_, MPFR_RNDN);
  return *this;
}

BigFloat& BigFloat::operator=(BigFloat&& other) noexcept {
  if (this == &other) return *this;
  if (is_live(value_)) mpfr_clear(value_);
  *value_ = *other.value_;
  other.value_->_mpfr_d = nullptr;
  return *this;
}

BigFloat& BigFloat::operator=(double x) {
  ensure_live();
  mpfr_set_d(value_, x, MPFR_RNDN);
  return *this;
}

BigFloat::~BigFloat() {
  if (is_live(value_)) mpfr_clear(value_);
}

void BigFloat::ensure_live() {
  if (!is_live(value_)) mpfr_init2(value_, tls_precision);
}

std::string BigFloat::to_string(int digits) const {
  char* buf = nullptr;
  mpfr_asprintf(&buf, "%.*Rg", digits, value_);
  std::unique_ptr<char, void (*)(char*)> owner(buf, [](char* p) { mpfr_free_str(p); });
  return std::string(buf);
}

BigFloat& BigFloat::operator+=(const BigFloat& rhs) {
  mpfr_add(value_, value_, rhs.value_, MPFR_RNDN);
  return *this;
}
BigFloat& BigFloat::operator-=(const BigFloat& rhs) {
  mpfr_sub(value_, value_, rhs.value_, MPFR_RNDN);
  return *this;
}
BigFloat& BigFloat::operator*=(const BigFloat& rhs) {
  mpfr_mul(value_, value_, rhs.value_, MPFR_RNDN);
  return *this;
}
BigFloat& BigFloat::operator/=(const BigFloat& rhs) {
  mpfr_div(value_, value_, rhs.value_, MPFR_RNDN);
  return *this;
}
BigFloat& BigFloat::operator+=(double rhs) {
  mpfr_add_d(value_, value_, rhs, MPFR_RNDN);
  return *this;
}
BigFloat& BigFloat::operator-=(double rhs) {
  mpfr_sub_d(value_, value_, rhs, MPFR_RNDN);
  return *this;
}
BigFloat& BigFloat::operator*=(double rhs) {
  mpfr_mul_d(value_, value_, rhs, MPFR_RNDN);
  return *this;
}
BigFloat& BigFloat::operator/=(double rhs) {
  mpfr_div_d(value_, value_, rhs, MPFR_RNDN);
  return *this;
}

BigFloat BigFloat::operator-() const& {
  BigFloat r(Uninit{});
  mpfr_neg(r.value_, value_, MPFR_RNDN);
  return r;
}

BigFloat BigFloat::operator-() && {
  mpfr_neg(value_, value_, MPFR_RNDN);
  return std::move(*this);
}

BigFloat BigFloat::pi() {
  BigFloat r(Uninit{});
  mpfr_const_pi(r.value_, MPFR_RNDN);
  return r;
}

namespace {

using BinaryFn = int (*)(mpfr_ptr, mpfr_srcptr, mpfr_srcptr, mpfr_rnd_t);
using UnaryFn = int (*)(mpfr_ptr, mpfr_srcptr, mpfr_rnd_t);

BigFloat fresh(BinaryFn fn, const BigFloat& a, const BigFloat& b) {
  BigFloat r = uninitialized_bigfloat();
  fn(r.raw(), a.raw(), b.raw(), MPFR_RNDN);
  return r;
}

BigFloat reuse(BinaryFn fn, BigFloat&& target, const BigFloat& a, const BigFloat& b) {
  fn(target.raw(), a.raw(), b.raw(), MPFR_RNDN);
  return std::move(target);
}

BigFloat unary(UnaryFn fn, const BigFloat& x) {
  BigFloat r = uninitialized_bigfloat();
  fn(r.raw(), x.raw(), MPFR_RNDN);
  return r;
}

}  // namespace

#define SHADOWFLOW_BIGFLOAT_BINARY(op, fn, fn_d_right, fn_d_left)                                 \
  BigFloat operator op(const BigFloat& a, const BigFloat& b) { return fresh(fn, a, b); }          \
  BigFloat operator op(BigFloat&& a, const BigFloat& b) { return reuse(fn, std::move(a), a, b); } \
  BigFloat operator op(const BigFloat& a, BigFloat&& b) { return reuse(fn, std::move(b), a, b); } \
  BigFloat operator op(BigFloat&& a, BigFloat&& b) { return reuse(fn, std::move(a), a, b); }      \
  BigFloat operator op(const BigFloat& a, double b) {                                              \
    BigFloat r = uninitialized_bigfloat();                                                         \
    fn_d_right(r.raw(), a.raw(), b, MPFR_RNDN);                                                    \
    return r;                                                                                      \
  }                                                                                                \
  BigFloat operator op(BigFloat&& a, double b) {                                                   \
    fn_d_right(a.raw(), a.raw(), b, MPFR_RNDN);                                                    \
    return std::move(a);                                                                           \
  }                                                                                                \
  BigFloat operator op(double a, const BigFloat& b) {                                              \
    BigFloat r = uninitialized_bigfloat();                                                         \
    fn_d_left(r.raw(), a, b.raw(), MPFR_RNDN);                                                     \
    return r;                                                                                      \
  }                                                                                                \
  BigFloat operator op(double a, BigFloat&& b) {                                                   \
    fn_d_left(b.raw(), a, b.raw(), MPFR_RNDN);                                                     \
    return std::move(b);                                                                           \
  }

namespace {
// mpfr has no add_d/mul_d with the double on the left; they commute.
int add_d_left(mpfr_ptr r, double a, mpfr_srcptr b, mpfr_rnd_t rnd) { return mpfr_add_d(r, b, a, rnd); }
int mul_d_left(mpfr_ptr r, double a, mpfr_srcptr b, mpfr_rnd_t rnd) { return mpfr_mul_d(r, b, a, rnd); }
}  // namespace

SHADOWFLOW_BIGFLOAT_BINARY(+, mpfr_add, mpfr_add_d, add_d_left)
SHADOWFLOW_BIGFLOAT_BINARY(-, mpfr_sub, mpfr_sub_d, mpfr_d_sub)
SHADOWFLOW_BIGFLOAT_BINARY(*, mpfr_mul, mpfr_mul_d, mul_d_left)
SHADOWFLOW_BIGFLOAT_BINARY(/, mpfr_div, mpfr_div_d, mpfr_d_div)

#undef SHADOWFLOW_BIGFLOAT_BINARY

BigFloat abs(const BigFloat& x) { return unary(mpfr_abs, x); }
BigFloat sqrt(const BigFloat& x) { return unary(mpfr_sqrt, x); }
BigFloat exp(const BigFloat& x) { return unary(mpfr_exp, x); }
BigFloat log(const BigFloat& x) { return unary(mpfr_log, x); }
BigFloat log1p(const BigFloat& x) { return unary(mpfr_log1p, x); }
BigFloat expm1(const BigFloat& x) { return unary(mpfr_expm1, x); }
BigFloat sin(const BigFloat& x) { return unary(mpfr_sin, x); }
BigFloat cos(const BigFloat& x) { return unary(mpfr_cos, x); }
BigFloat erfc(const BigFloat& x) { return unary(mpfr_erfc, x); }

BigFloat floor(const BigFloat& x) {
  BigFloat r = uninitialized_bigfloat();
  mpfr_floor(r.raw(), x.raw());
  return r;
}

BigFloat fmax(const BigFloat& a, const BigFloat& b) { return fresh(mpfr_max, a, b); }

std::ostream& operator<<(std::ostream& os, const BigFloat& x) { return os << x.to_string(); }

BigVector promote(std::span<const double> x, const PrecisionSpec& spec) {
  if (!spec.is_extended()) throw std::invalid_argument("promote requires an extended precision spec");
  PrecisionScope scope(spec.mantissa_bits);
  return promote(x);
}

BigVector promote(std::span<const double> x) { return BigVector(x.begin(), x.end()); }

double demote(const BigFloat& x) {
  const double d = x.to_double();
  if (x.is_finite() && !std::isfinite(d))
    throw std::overflow_error("extended value " + x.to_string(6) + " overflows float64");
  return d;
}

std::vector<double> demote(std::span<const BigFloat> x) {
  std::vector<double> out;
  out.reserve(x.size());
  for (const auto& v : x) out.push_back(demote(v));
  return out;
}

namespace detail {

BigFloat compute_constant(ConstantId id) {
  switch (id) {
    case ConstantId::LogTwoPi:
      return log(BigFloat::pi() * 2.0);
    case ConstantId::Sqrt1_2:
      return sqrt(BigFloat(0.5));
    case ConstantId::TwoPi:
      return BigFloat::pi() * 2.0;
  }
  throw std::logic_error("unknown constant");
}

}  // namespace detail

}  // namespace shadowflow

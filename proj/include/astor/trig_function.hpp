#pragma once

#include <vector>

#include "astor/core.hpp"
#include "json.hpp"

namespace astor {

enum class Phase { Cos, Sin };

/// One term amp * p^alpha * {cos|sin}(k.q) * exp(-mu t).
struct TrigTerm {
  std::vector<int> k;
  std::vector<int> alpha;
  Phase phase = Phase::Cos;
  double amp = 0.0;
  double mu = 0.0;

  int p_degree() const;
};

/// Finite trigonometric polynomial in q, polynomial in p, with exponential
/// time envelopes. This is the exact representation for all analytic inputs
/// (W, a, b, the quadratic remainder, P, test right-hand sides).
class TrigTimeFunction {
 public:
  TrigTimeFunction() = default;
  explicit TrigTimeFunction(int n) : n_(n) {}
  TrigTimeFunction(int n, std::vector<TrigTerm> terms);

  int n() const { return n_; }
  const std::vector<TrigTerm>& terms() const { return terms_; }
  bool empty() const { return terms_.empty(); }

  TrigTimeFunction& add(TrigTerm term);
  /// Convenience for p-independent terms.
  TrigTimeFunction& add(std::vector<int> k, Phase phase, double amp, double mu = 0.0);

  double operator()(const Vec& q, const Vec& p, double t) const;
  double operator()(const Vec& q, double t) const { return (*this)(q, Vec{}, t); }

  TrigTimeFunction dq(int axis) const;
  TrigTimeFunction dp(int axis) const;
  TrigTimeFunction dt() const;
  TrigTimeFunction scaled(double c) const;
  /// Multiplies every term by p_axis.
  TrigTimeFunction times_p(int axis) const;
  /// Keeps only terms of the given total p-degree.
  TrigTimeFunction p_degree_part(int degree) const;

  int max_p_degree() const;
  bool is_autonomous() const;
  bool q_independent() const;
  double min_mu() const;

  nlohmann::json to_json() const;
  static TrigTimeFunction from_json(const nlohmann::json& j);

  friend TrigTimeFunction operator+(const TrigTimeFunction& a, const TrigTimeFunction& b);

 private:
  int n_ = 1;
  std::vector<TrigTerm> terms_;
};

/// Vector-valued field as one scalar function per component.
using TrigField = std::vector<TrigTimeFunction>;

Vec evaluate(const TrigField& f, const Vec& q, const Vec& p, double t);
nlohmann::json field_to_json(const TrigField& f);
/// Accepts either a single object (scalar field) or an array of objects.
TrigField field_from_json(const nlohmann::json& j);

/// Analytic bound on sup_{t >= t_start} |f^t|_{C^sigma} e^{lambda t} for a
/// p-independent function; +inf when some term decays slower than lambda.
double tail_certificate(const TrigTimeFunction& f, double sigma, double lambda, double t_start);

}  // namespace astor

#include "astor/trig_function.hpp"

#include <algorithm>
#include <limits>

namespace astor {

int TrigTerm::p_degree() const {
  int d = 0;
  for (int a : alpha) d += a;
  return d;
}

TrigTimeFunction::TrigTimeFunction(int n, std::vector<TrigTerm> terms) : n_(n) {
  for (auto& t : terms) add(std::move(t));
}

TrigTimeFunction& TrigTimeFunction::add(TrigTerm term) {
  if (term.k.empty()) term.k.assign(n_, 0);
  if (term.alpha.empty()) term.alpha.assign(n_, 0);
  if (static_cast<int>(term.k.size()) != n_ || static_cast<int>(term.alpha.size()) != n_)
    throw ConfigError("trig term dimension mismatch: expected n = " + std::to_string(n_));
  if (!std::isfinite(term.amp)) throw ConfigError("trig term amplitude is not finite");
  if (!(term.mu >= 0.0) || !std::isfinite(term.mu)) throw ConfigError("trig term decay rate mu must be finite and >= 0");
  for (int a : term.alpha)
    if (a < 0) throw ConfigError("trig term p-exponent must be >= 0");
  terms_.push_back(std::move(term));
  return *this;
}

TrigTimeFunction& TrigTimeFunction::add(std::vector<int> k, Phase phase, double amp, double mu) {
  TrigTerm t;
  t.k = std::move(k);
  t.phase = phase;
  t.amp = amp;
  t.mu = mu;
  return add(std::move(t));
}

double TrigTimeFunction::operator()(const Vec& q, const Vec& p, double t) const {
  double sum = 0.0;
  for (const auto& term : terms_) {
    double arg = 0.0;
    for (int i = 0; i < n_; ++i) arg += term.k[i] * q[i];
    double v = term.amp * (term.phase == Phase::Cos ? std::cos(arg) : std::sin(arg));
    for (int i = 0; i < n_; ++i)
      for (int e = 0; e < term.alpha[i]; ++e) v *= p[i];
    if (term.mu != 0.0) v *= std::exp(-term.mu * t);
    sum += v;
  }
  return sum;
}

TrigTimeFunction TrigTimeFunction::dq(int axis) const {
  TrigTimeFunction out(n_);
  for (const auto& term : terms_) {
    if (term.k[axis] == 0) continue;
    TrigTerm d = term;
    if (term.phase == Phase::Cos) {
      d.phase = Phase::Sin;
      d.amp = -term.amp * term.k[axis];
    } else {
      d.phase = Phase::Cos;
      d.amp = term.amp * term.k[axis];
    }
    out.terms_.push_back(std::move(d));
  }
  return out;
}

TrigTimeFunction TrigTimeFunction::dp(int axis) const {
  TrigTimeFunction out(n_);
  for (const auto& term : terms_) {
    if (term.alpha[axis] == 0) continue;
    TrigTerm d = term;
    d.amp = term.amp * term.alpha[axis];
    d.alpha[axis] -= 1;
    out.terms_.push_back(std::move(d));
  }
  return out;
}

TrigTimeFunction TrigTimeFunction::dt() const {
  TrigTimeFunction out(n_);
  for (const auto& term : terms_) {
    if (term.mu == 0.0) continue;
    TrigTerm d = term;
    d.amp = -term.mu * term.amp;
    out.terms_.push_back(std::move(d));
  }
  return out;
}

TrigTimeFunction TrigTimeFunction::scaled(double c) const {
  TrigTimeFunction out = *this;
  for (auto& t : out.terms_) t.amp *= c;
  return out;
}

TrigTimeFunction TrigTimeFunction::times_p(int axis) const {
  TrigTimeFunction out = *this;
  for (auto& t : out.terms_) t.alpha[axis] += 1;
  return out;
}

TrigTimeFunction TrigTimeFunction::p_degree_part(int degree) const {
  TrigTimeFunction out(n_);
  for (const auto& t : terms_)
    if (t.p_degree() == degree) out.terms_.push_back(t);
  return out;
}

int TrigTimeFunction::max_p_degree() const {
  int d = 0;
  for (const auto& t : terms_) d = std::max(d, t.p_degree());
  return d;
}

bool TrigTimeFunction::is_autonomous() const {
  return std::all_of(terms_.begin(), terms_.end(), [](const TrigTerm& t) { return t.mu == 0.0; });
}

bool TrigTimeFunction::q_independent() const {
  for (const auto& t : terms_)
    for (int k : t.k)
      if (k != 0) return false;
  return true;
}

double TrigTimeFunction::min_mu() const {
  double m = std::numeric_limits<double>::infinity();
  for (const auto& t : terms_)
    if (t.amp != 0.0) m = std::min(m, t.mu);
  return m;
}

TrigTimeFunction operator+(const TrigTimeFunction& a, const TrigTimeFunction& b) {
  if (a.n() != b.n()) throw ConfigError("cannot add trig functions of different dimension");
  TrigTimeFunction out = a;
  for (const auto& t : b.terms()) out.terms_.push_back(t);
  return out;
}

nlohmann::json TrigTimeFunction::to_json() const {
  nlohmann::json terms = nlohmann::json::array();
  for (const auto& t : terms_) {
    terms.push_back({{"k", t.k},
                     {"alpha", t.alpha},
                     {"phase", t.phase == Phase::Cos ? "cos" : "sin"},
                     {"amp", t.amp},
                     {"mu", t.mu}});
  }
  return {{"n", n_}, {"terms", terms}};
}

TrigTimeFunction TrigTimeFunction::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("trig function must be an object with keys n, terms");
  for (const auto& [key, _] : j.items())
    if (key != "n" && key != "terms") throw ConfigError("unknown key '" + key + "' in trig function");
  if (!j.contains("n") || !j.at("n").is_number_integer()) throw ConfigError("trig function needs integer 'n'");
  const int n = j.at("n").get<int>();
  if (n < 1 || n > kMaxDim) throw ConfigError("trig function dimension n must be in [1, " + std::to_string(kMaxDim) + "]");
  TrigTimeFunction f(n);
  if (!j.contains("terms")) return f;
  if (!j.at("terms").is_array()) throw ConfigError("'terms' must be an array");
  for (const auto& jt : j.at("terms")) {
    for (const auto& [key, _] : jt.items())
      if (key != "k" && key != "alpha" && key != "phase" && key != "amp" && key != "mu")
        throw ConfigError("unknown key '" + key + "' in trig term");
    TrigTerm t;
    if (jt.contains("k")) t.k = jt.at("k").get<std::vector<int>>();
    if (jt.contains("alpha")) t.alpha = jt.at("alpha").get<std::vector<int>>();
    const std::string phase = jt.value("phase", std::string("cos"));
    if (phase == "cos")
      t.phase = Phase::Cos;
    else if (phase == "sin")
      t.phase = Phase::Sin;
    else
      throw ConfigError("phase must be \"cos\" or \"sin\", got \"" + phase + "\"");
    if (!jt.contains("amp") || !jt.at("amp").is_number()) throw ConfigError("trig term needs numeric 'amp'");
    t.amp = jt.at("amp").get<double>();
    t.mu = jt.value("mu", 0.0);
    f.add(std::move(t));
  }
  return f;
}

Vec evaluate(const TrigField& f, const Vec& q, const Vec& p, double t) {
  Vec out{};
  for (std::size_t i = 0; i < f.size(); ++i) out[i] = f[i](q, p, t);
  return out;
}

nlohmann::json field_to_json(const TrigField& f) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& c : f) arr.push_back(c.to_json());
  return arr;
}

TrigField field_from_json(const nlohmann::json& j) {
  TrigField out;
  if (j.is_array()) {
    for (const auto& c : j) out.push_back(TrigTimeFunction::from_json(c));
  } else {
    out.push_back(TrigTimeFunction::from_json(j));
  }
  return out;
}

double tail_certificate(const TrigTimeFunction& f, double sigma, double lambda, double t_start) {
  const int k_int = static_cast<int>(std::floor(sigma));
  const double frac = sigma - k_int;
  double bound = 0.0;
  for (const auto& t : f.terms()) {
    if (t.amp == 0.0) continue;
    if (t.p_degree() != 0) throw UnsupportedInputError("tail certificate needs a p-independent function");
    if (t.mu < lambda) return std::numeric_limits<double>::infinity();
    double kmax = 0.0, k2 = 0.0;
    for (int k : t.k) {
      kmax = std::max(kmax, std::abs(static_cast<double>(k)));
      k2 += static_cast<double>(k) * k;
    }
    double deriv = 1.0;
    for (int j = 1; j <= k_int; ++j) deriv = std::max(deriv, std::pow(kmax, j));
    double c = deriv;
    if (frac > 0.0) {
      const double top = std::pow(kmax, k_int);
      c += std::sqrt(k2) * top + 2.0 * top;
    }
    bound += std::abs(t.amp) * c * std::exp((lambda - t.mu) * t_start);
  }
  return bound;
}

}  // namespace astor

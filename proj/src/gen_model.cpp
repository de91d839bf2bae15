#include "lipdse/gen_model.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace lipdse {

void GeneratorParams::validate() const {
  auto require_positive = [](double v, const char* name) {
    if (!(v > 0.0) || !std::isfinite(v))
      throw std::domain_error(std::string("generator parameter ") + name +
                              " must be finite and positive");
  };
  require_positive(omega0, "omega0");
  require_positive(H, "H");
  require_positive(Td0p, "Td0p");
  require_positive(Tq0p, "Tq0p");
  require_positive(S_B, "S_B");
  require_positive(S_N, "S_N");
  for (const auto& [v, name] : {std::pair{K_D, "K_D"}, std::pair{xd, "xd"}, std::pair{xq, "xq"},
                                std::pair{xdp, "xdp"}, std::pair{xqp, "xqp"}}) {
    if (!std::isfinite(v))
      throw std::domain_error(std::string("generator parameter ") + name + " must be finite");
  }
}

DerivedConstants derive_constants(const GeneratorParams& p) {
  p.validate();
  const double k = p.S_B / p.S_N;
  const double swing = p.omega0 / (2.0 * p.H);

  DerivedConstants c;
  c.alpha[0] = p.omega0;
  c.alpha[1] = swing;
  c.alpha[2] = swing * k;
  c.alpha[3] = swing * k * k * (p.xqp - p.xdp);
  c.alpha[4] = p.K_D / (2.0 * p.H);
  c.alpha[5] = p.K_D / (2.0 * p.H) * p.omega0;
  c.alpha[6] = 1.0 / p.Td0p;
  c.alpha[7] = 1.0 / p.Td0p * k * (p.xd - p.xdp);
  c.alpha[8] = 1.0 / p.Tq0p;
  c.alpha[9] = 1.0 / p.Tq0p * k * (p.xq - p.xqp);
  c.beta1 = 0.5 * k * (p.xqp - p.xdp);
  c.beta2 = 0.5 * k * (p.xqp + p.xdp);
  return c;
}

StateMatrices build_matrices(const DerivedConstants& c) {
  StateMatrices m;
  m.A(0, 1) = 1.0;
  m.A(1, 1) = -c.a(5);
  m.A(2, 2) = -c.a(7);
  m.A(3, 3) = -c.a(9);
  m.Bu(1, 0) = c.a(2);
  m.Bu(2, 1) = c.a(7);
  m.Du(0, 3) = c.beta2;
  m.Du(1, 2) = -c.beta2;
  return m;
}

Vec4 eval_f(const DerivedConstants& c, const State& x, const Input& u) {
  const double s = std::sin(x(0));
  const double co = std::cos(x(0));
  const double s2 = std::sin(2.0 * x(0));
  const double c2 = std::cos(2.0 * x(0));
  const double x3 = x(2), x4 = x(3), u3 = u(2), u4 = u(3);
  const double a3 = c.a(3), a4 = c.a(4), a8 = c.a(8), a10 = c.a(10);

  Vec4 f;
  f(0) = -c.a(1);
  f(1) = a3 * x4 * u4 * co - a3 * x3 * u4 * s - a3 * x4 * u3 * s - a3 * x3 * u3 * co +
         a4 * u3 * u4 * c2 + 0.5 * a4 * (u4 * u4 - u3 * u3) * s2 + c.a(6);
  f(2) = a8 * u4 * co - a8 * u3 * s;
  f(3) = a10 * u3 * co + a10 * u4 * s;
  return f;
}

Vec2 eval_h(const DerivedConstants& c, const State& x, const Input& u) {
  const double s = std::sin(x(0));
  const double co = std::cos(x(0));
  const double s2 = std::sin(2.0 * x(0));
  const double c2 = std::cos(2.0 * x(0));
  const double x3 = x(2), x4 = x(3), u3 = u(2), u4 = u(3);
  const double b1 = c.beta1;

  // The u4*cos(2 x1) term carries a minus sign; this is what composing the
  // terminal-voltage rotation with the stator-current projection produces.
  Vec2 h;
  h(0) = x3 * co + x4 * s + b1 * u3 * s2 - b1 * u4 * c2;
  h(1) = x3 * s - x4 * co - b1 * u3 * c2 - b1 * u4 * s2;
  return h;
}

Vec4 eval_dynamics(const DerivedConstants& c, const StateMatrices& m, const State& x,
                   const Input& u) {
  return m.A * x + eval_f(c, x, u) + m.Bu * u;
}

Output eval_output(const DerivedConstants& c, const StateMatrices& m, const State& x,
                   const Input& u) {
  return eval_h(c, x, u) + m.Du * u;
}

Mat4 jac_f_x(const DerivedConstants& c, const State& x, const Input& u) {
  const double s = std::sin(x(0));
  const double co = std::cos(x(0));
  const double s2 = std::sin(2.0 * x(0));
  const double c2 = std::cos(2.0 * x(0));
  const double x3 = x(2), x4 = x(3), u3 = u(2), u4 = u(3);
  const double a3 = c.a(3), a4 = c.a(4), a8 = c.a(8), a10 = c.a(10);

  Mat4 J = Mat4::Zero();
  J(1, 0) = -a3 * x4 * u4 * s - a3 * x3 * u4 * co - a3 * x4 * u3 * co + a3 * x3 * u3 * s -
            2.0 * a4 * u3 * u4 * s2 + a4 * (u4 * u4 - u3 * u3) * c2;
  J(1, 2) = -a3 * u4 * s - a3 * u3 * co;
  J(1, 3) = a3 * u4 * co - a3 * u3 * s;
  J(2, 0) = -a8 * u4 * s - a8 * u3 * co;
  J(3, 0) = -a10 * u3 * s + a10 * u4 * co;
  return J;
}

Mat2x4 jac_h_x(const DerivedConstants& c, const State& x, const Input& u) {
  const double s = std::sin(x(0));
  const double co = std::cos(x(0));
  const double s2 = std::sin(2.0 * x(0));
  const double c2 = std::cos(2.0 * x(0));
  const double x3 = x(2), x4 = x(3), u3 = u(2), u4 = u(3);
  const double b1 = c.beta1;

  Mat2x4 J = Mat2x4::Zero();
  J(0, 0) = -x3 * s + x4 * co + 2.0 * b1 * u3 * c2 + 2.0 * b1 * u4 * s2;
  J(0, 2) = co;
  J(0, 3) = s;
  J(1, 0) = x3 * co + x4 * s + 2.0 * b1 * u3 * s2 - 2.0 * b1 * u4 * c2;
  J(1, 2) = s;
  J(1, 3) = -co;
  return J;
}

AirGapQuantities intermediate_quantities(const DerivedConstants& /*c*/, const GeneratorParams& p,
                                         const State& x, const Input& u) {
  const double k = p.base_ratio();
  const double s = std::sin(x(0));
  const double co = std::cos(x(0));

  AirGapQuantities q;
  q.iq = u(3) * s + u(2) * co;
  q.id = u(2) * s - u(3) * co;
  q.eq = x(2) - k * p.xdp * q.id;
  q.ed = x(3) + k * p.xqp * q.iq;
  q.Pe = q.eq * q.iq + q.ed * q.id;
  q.Te = k * q.Pe;
  return q;
}

}  // namespace lipdse

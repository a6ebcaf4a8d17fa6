// load a dumped QP and study ADMM behavior (scratch)
#include <cstdio>
#include <fstream>
#include <limits>
#include <string>
#include "cfc/qp.hpp"
using namespace cfc;

static double tok2d(std::ifstream& is) {
  std::string t;
  is >> t;
  if (t == "inf") return std::numeric_limits<double>::infinity();
  if (t == "-inf") return -std::numeric_limits<double>::infinity();
  if (t == "nan" || t == "-nan") return std::nan("");
  return std::stod(t);
}

int main(int argc, char** argv) {
  std::ifstream is(argv[1]);
  long n, m;
  is >> n >> m;
  QpProblem qp;
  qp.H = Matrix(n, n); qp.f = Vector(n); qp.C = Matrix(m, n); qp.l = Vector(m); qp.u = Vector(m);
  for (long i = 0; i < n; ++i) for (long j = 0; j < n; ++j) qp.H(i, j) = tok2d(is);
  for (long i = 0; i < n; ++i) qp.f(i) = tok2d(is);
  for (long i = 0; i < m; ++i) for (long j = 0; j < n; ++j) qp.C(i, j) = tok2d(is);
  for (long i = 0; i < m; ++i) qp.l(i) = tok2d(is);
  for (long i = 0; i < m; ++i) qp.u(i) = tok2d(is);
  Vector warm(n);
  for (long i = 0; i < n; ++i) warm(i) = tok2d(is);
  std::printf("n=%ld m=%ld |H|=%g |f|=%g |warm|=%g finite_l=%d finite_u=%d\n", n, m,
              qp.H.cwiseAbs().maxCoeff(), qp.f.cwiseAbs().maxCoeff(), warm.cwiseAbs().maxCoeff(),
              int(qp.l.array().isFinite().count()), int(qp.u.array().isFinite().count()));
  Eigen::SelfAdjointEigenSolver<Matrix> es(qp.H);
  std::printf("eig(H): min=%g max=%g\n", es.eigenvalues().minCoeff(), es.eigenvalues().maxCoeff());
  for (double rho : {0.1, 1.0, 10.0}) {
    QpSettings st; st.rho = rho; st.max_iter = 400000;
    try {
      const QpSolution sol = solve_qp(qp, st);
      std::printf("rho=%g cold -> status=%d iters=%d obj=%.8g kkt=%g\n", rho, int(sol.status),
                  sol.iterations, sol.objective, kkt_residual(qp, sol));
    } catch (const std::exception& e) { std::printf("rho=%g cold -> %s\n", rho, e.what()); }
  }
  QpSettings st; st.max_iter = 400000;
  try {
    const QpSolution w = solve_qp(qp, st, &warm);
    std::printf("warm rho=1 -> status=%d iters=%d obj=%.8g\n", int(w.status), w.iterations, w.objective);
  } catch (const std::exception& e) { std::printf("warm rho=1 -> %s\n", e.what()); }
  return 0;
}

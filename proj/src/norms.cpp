#include "fraclab/norms.hpp"

#include <sstream>

namespace fraclab {

SobolevGram build_gram(const RegionMask& region, double s, double condition_cap) {
  if (region.size() == 0) throw std::invalid_argument("build_gram: empty region");
  const LatticeSpec& lat = region.lattice();
  Eigen::VectorXd g = symbol_kernel(lat, bessel_symbol(lat, s));
  const double hn = lat.cell_volume();
  const auto& nodes = region.nodes();
  const Index m = region.size();

  SobolevGram out;
  out.s = s;
  out.node_basis = region;
  out.matrix.resize(m, m);
  for (Index i = 0; i < m; ++i)
    for (Index j = 0; j <= i; ++j) {
      const double a = 0.5 * (g(lat.offset_index(nodes[i], nodes[j])) + g(lat.offset_index(nodes[j], nodes[i])));
      out.matrix(i, j) = out.matrix(j, i) = hn * a;
    }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(out.matrix, Eigen::EigenvaluesOnly);
  const double lo = es.eigenvalues().minCoeff(), hi = es.eigenvalues().maxCoeff();
  if (!(lo > 0)) throw std::runtime_error("build_gram: Gram matrix is not positive definite");
  out.condition = hi / lo;
  if (out.condition > condition_cap) {
    std::ostringstream os;
    os << "Gram condition number " << out.condition << " exceeds cap " << condition_cap;
    out.warnings.push_back(os.str());
  }
  out.chol.compute(out.matrix);
  if (out.chol.info() != Eigen::Success) throw std::runtime_error("build_gram: Cholesky failed");
  return out;
}

double dual_norm(const Eigen::VectorXd& functional, const SobolevGram& gram) {
  if (functional.size() != gram.matrix.rows()) throw std::invalid_argument("dual_norm: size mismatch");
  if (gram.chol.info() != Eigen::Success) throw std::runtime_error("dual_norm: singular Gram matrix");
  Eigen::VectorXd y = gram.chol.matrixL().solve(functional);
  return y.norm();
}

Eigen::MatrixXd whiten(const Eigen::MatrixXd& bilinear, const SobolevGram& gram) {
  if (bilinear.rows() != gram.matrix.rows() || bilinear.cols() != gram.matrix.cols())
    throw std::invalid_argument("op_norm: size mismatch");
  Eigen::MatrixXd left = gram.chol.matrixL().solve(bilinear);
  Eigen::MatrixXd both = gram.chol.matrixL().solve(left.transpose());
  return both.transpose();
}

double op_norm(const Eigen::MatrixXd& bilinear, const SobolevGram& gram) {
  if (gram.chol.info() != Eigen::Success) throw std::runtime_error("op_norm: singular Gram matrix");
  Eigen::MatrixXd wm = whiten(bilinear, gram);
  if (wm.size() == 0) return 0.0;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(wm);
  return svd.singularValues()(0);
}

double gram_norm(const Eigen::VectorXd& coeffs, const SobolevGram& gram) {
  return std::sqrt(std::max(0.0, coeffs.dot(gram.matrix * coeffs)));
}

}  // namespace fraclab

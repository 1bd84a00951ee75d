#include "vssf/optimizer.hpp"

#include <cmath>

#include "vssf/error.hpp"

namespace vssf {

AdamState make_adam_state(const std::vector<Eigen::MatrixXd*>& params) {
  AdamState s;
  for (const Eigen::MatrixXd* p : params) {
    s.first.push_back(Eigen::MatrixXd::Zero(p->rows(), p->cols()));
    s.second.push_back(Eigen::MatrixXd::Zero(p->rows(), p->cols()));
  }
  return s;
}

void adam_step(const std::vector<Eigen::MatrixXd*>& params, const std::vector<bool>& trainable,
               const std::vector<Eigen::MatrixXd>& grads, AdamState& state, const AdamConfig& config) {
  require(params.size() == grads.size() && params.size() == trainable.size() && params.size() == state.first.size() &&
              params.size() == state.second.size(),
          ErrorKind::kShapeMismatch, "adam: parameter, gradient and state counts differ");
  for (std::size_t k = 0; k < params.size(); ++k) {
    require(grads[k].rows() == params[k]->rows() && grads[k].cols() == params[k]->cols() &&
                state.first[k].rows() == params[k]->rows() && state.first[k].cols() == params[k]->cols(),
            ErrorKind::kShapeMismatch, "adam: shape mismatch at parameter " + std::to_string(k));
    if (trainable[k] && !grads[k].allFinite()) {
      throw Error(ErrorKind::kNonFinite, "non-finite gradient at parameter " + std::to_string(k));
    }
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(config.beta1, t);
  const double correction2 = 1.0 - std::pow(config.beta2, t);
  for (std::size_t k = 0; k < params.size(); ++k) {
    if (!trainable[k]) continue;
    state.first[k] = config.beta1 * state.first[k] + (1.0 - config.beta1) * grads[k];
    state.second[k] = config.beta2 * state.second[k] + (1.0 - config.beta2) * grads[k].cwiseAbs2();
    const Eigen::ArrayXXd m_hat = state.first[k].array() / correction1;
    const Eigen::ArrayXXd v_hat = state.second[k].array() / correction2;
    params[k]->array() -= config.learning_rate * m_hat / (v_hat.sqrt() + config.epsilon);
  }
}

double clip_global_norm(std::vector<Eigen::MatrixXd>& grads, double max_norm) {
  double sq = 0.0;
  for (const Eigen::MatrixXd& g : grads) sq += g.squaredNorm();
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    const double factor = max_norm / norm;
    for (Eigen::MatrixXd& g : grads) g *= factor;
  }
  return norm;
}

}  // namespace vssf

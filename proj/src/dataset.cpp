#include "vssf/dataset.hpp"

#include "vssf/error.hpp"

namespace vssf {

Eigen::MatrixXd Array3::block(std::size_t i) const {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(steps), static_cast<Eigen::Index>(width));
  for (std::size_t t = 0; t < steps; ++t) {
    for (std::size_t k = 0; k < width; ++k) out(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(k)) = at(i, t, k);
  }
  return out;
}

void Array3::set_block(std::size_t i, const Eigen::MatrixXd& rows) {
  require(static_cast<std::size_t>(rows.rows()) == steps && static_cast<std::size_t>(rows.cols()) == width,
          ErrorKind::kShapeMismatch, "block shape");
  for (std::size_t t = 0; t < steps; ++t) {
    for (std::size_t k = 0; k < width; ++k) {
      at(i, t, k) = static_cast<float>(rows(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(k)));
    }
  }
}

void validate(const Dataset& d) {
  const auto check = [](const Array3& a, const std::string& name) {
    require(a.data.size() == a.n * a.steps * a.width, ErrorKind::kShapeMismatch, name + ": payload size");
  };
  check(d.states, "states");
  check(d.inputs, "inputs");
  require(d.inputs.n == d.states.n, ErrorKind::kShapeMismatch, "inputs/states trajectory count");
  require(d.states.steps == 0 || d.inputs.steps + 1 == d.states.steps, ErrorKind::kShapeMismatch,
          "inputs must have one step fewer than states");
  for (const auto& [name, obs] : d.observations) {
    check(obs, name);
    require(obs.n == d.states.n && obs.steps == d.states.steps, ErrorKind::kShapeMismatch,
            "observation '" + name + "' shape does not match states");
  }
}

}  // namespace vssf

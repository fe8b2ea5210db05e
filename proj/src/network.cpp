#include "gridbroker/network.hpp"

namespace gridbroker {

Eigen::MatrixXd incidence(const NetworkSpec& net) {
  Eigen::MatrixXd M = Eigen::MatrixXd::Zero(net.n_branches(), net.n_buses());
  for (int k = 0; k < net.n_branches(); ++k) {
    const auto& br = net.branches[std::size_t(k)];
    M(k, net.index_of(br.from_bus)) = 1;
    M(k, net.index_of(br.to_bus)) = -1;
  }
  return M;
}

}  // namespace gridbroker

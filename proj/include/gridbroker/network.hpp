// DC real-power network: branch flow = base_mva * susceptance * (theta_from - theta_to).
#pragma once

#include "gridbroker/model.hpp"

#include <Eigen/Dense>

namespace gridbroker {

// Branch flows (MW) from bus angles (rad), one column per hour or a single vector.
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, Derived::ColsAtCompileTime> branch_flows(
    const NetworkSpec& net, const Eigen::MatrixBase<Derived>& theta) {
  Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, Derived::ColsAtCompileTime> f(net.n_branches(),
                                                                                         theta.cols());
  for (int k = 0; k < net.n_branches(); ++k) {
    const auto& br = net.branches[std::size_t(k)];
    f.row(k) = net.base_mva * br.susceptance *
               (theta.row(net.index_of(br.from_bus)) - theta.row(net.index_of(br.to_bus)));
  }
  return f;
}

// Net power leaving each bus through its branches, given branch flows.
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, Derived::ColsAtCompileTime> bus_outflow(
    const NetworkSpec& net, const Eigen::MatrixBase<Derived>& flows) {
  Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, Derived::ColsAtCompileTime> out =
      Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, Derived::ColsAtCompileTime>::Zero(net.n_buses(),
                                                                                                 flows.cols());
  for (int k = 0; k < net.n_branches(); ++k) {
    const auto& br = net.branches[std::size_t(k)];
    out.row(net.index_of(br.from_bus)) += flows.row(k);
    out.row(net.index_of(br.to_bus)) -= flows.row(k);
  }
  return out;
}

// Branch-bus incidence (+1 at from, -1 at to).
Eigen::MatrixXd incidence(const NetworkSpec& net);

}  // namespace gridbroker

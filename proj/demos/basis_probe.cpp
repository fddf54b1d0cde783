// Usage example: sample a unit cube, build the corrected kernel basis, and
// verify the reproduction identities at a few probe points by hand.

#include <rksim/rksim.hpp>

#include <cstdio>

int main() {
  using namespace rksim;

  const ShapeSource cube = ShapeSource::make_box(Vec3::Zero(), Vec3::Ones());
  MaterialSpec material;
  const IntegrationSet integ = sample_grid(cube, material, 512);
  const KernelSet kernels = build_kernel_set(integ, 40);
  const BasisTable table = build_basis_table(integ, kernels);

  std::printf("points=%lld kernels=%lld total volume=%.6f\n",
              static_cast<long long>(integ.size()),
              static_cast<long long>(kernels.centers.rows()),
              integ.total_volume());

  const Vec3 probes[] = {Vec3(0.5, 0.5, 0.5), Vec3(0.2, 0.7, 0.4),
                         Vec3(0.9, 0.1, 0.6)};
  for (const Vec3& x : probes) {
    const VecX phi = shape_values(x, kernels);
    const MatX grads = shape_gradients(x, kernels);
    double unity = phi.sum() - 1.0;
    Vec3 linear = -x;
    Vec3 grad_sum = Vec3::Zero();
    for (Index k = 0; k < phi.size(); ++k) {
      linear += phi[k] * kernels.centers.row(k).transpose();
      grad_sum += grads.row(k).transpose();
    }
    std::printf("x=(%.2f %.2f %.2f)  |sum phi - 1|=%.2e  |sum phi p - x|=%.2e  "
                "|sum grad|=%.2e\n",
                x[0], x[1], x[2], std::abs(unity), linear.norm(),
                grad_sum.norm());
  }
  return 0;
}

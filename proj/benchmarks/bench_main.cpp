#include <random>

#include <benchmark/benchmark.h>

#include "dexsynth/bps.hpp"
#include "dexsynth/denoiser.hpp"
#include "dexsynth/hand_model.hpp"
#include "dexsynth/object_model.hpp"
#include "dexsynth/toy_hand.hpp"

using namespace dexsynth;

namespace {

const HandRig& rig() {
  static const HandRig r = make_toy_hand();
  return r;
}

HandPose bent_pose() {
  HandPose p;
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n(0.0, 0.3);
  p.trans = Vec3(0.01, -0.02, 0.03);
  for (auto& r : p.joint_rots) {
    const Vec3 w(n(rng), n(rng), n(rng));
    r = matrix_to_rot6d(Eigen::AngleAxisd(w.norm(), w.normalized()).toRotationMatrix());
  }
  return p;
}

ArticulatedObject box_object() {
  ArticulatedObject o;
  o.mesh = make_box(Vec3(0.04, 0.024, 0.035), 0.006);
  return o;
}

DenoiserConfig toy_denoiser() {
  DenoiserConfig c;
  c.x_dim = 198;
  c.condition_dims = {128 * 3 + 9};
  c.pool_in = 7;
  c.pool_width = 16;
  c.condition_out = 32;
  return c;
}

DenoiserInput toy_input(const DenoiserConfig& c, int frames) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n;
  auto fill = [&](int r, int k) {
    MatX m(r, k);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
    return m;
  };
  DenoiserInput in;
  in.x = fill(frames, c.x_dim);
  in.t = 500;
  for (int d : c.condition_dims) in.conditions.push_back(fill(frames, d));
  in.pool_vertices = 200;
  in.pool = fill(frames * 2 * in.pool_vertices, c.pool_in);
  return in;
}

void BM_ForwardKinematics(benchmark::State& state) {
  const HandPose p = bent_pose();
  for (auto _ : state) benchmark::DoNotOptimize(forward_kinematics(rig(), p));
}
BENCHMARK(BM_ForwardKinematics);

void BM_ForwardKinematicsBackward(benchmark::State& state) {
  const HandPose p = bent_pose();
  const FkResult fk = forward_kinematics(rig(), p);
  const Points gv = Points::Ones(fk.vertices.rows(), 3);
  const Points gj = Points::Ones(fk.joints.rows(), 3);
  for (auto _ : state) benchmark::DoNotOptimize(forward_kinematics_backward(rig(), p, fk, gv, gj));
}
BENCHMARK(BM_ForwardKinematicsBackward);

void BM_BpsEncode(benchmark::State& state) {
  const BasisPointSet basis = BasisPointSet::sample(static_cast<int>(state.range(0)), 0.12);
  const ArticulatedObject o = box_object();
  for (auto _ : state) benchmark::DoNotOptimize(bps_encode(o.mesh.vertices, basis, Vec3::Zero()));
}
BENCHMARK(BM_BpsEncode)->Arg(128)->Arg(512);

void BM_ObjectSdf(benchmark::State& state) {
  const ObjectSdf sdf(box_object());
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-0.06, 0.06);
  Points q(1024, 3);
  for (Eigen::Index i = 0; i < q.size(); ++i) q.data()[i] = u(rng);
  for (auto _ : state) {
    double acc = 0;
    Vec3 g;
    for (int i = 0; i < q.rows(); ++i) acc += sdf.evaluate(q.row(i).transpose(), 0.0, &g);
    benchmark::DoNotOptimize(acc);
  }
  state.SetItemsProcessed(state.iterations() * q.rows());
}
BENCHMARK(BM_ObjectSdf);

void BM_DenoiserForward(benchmark::State& state) {
  const DenoiserConfig c = toy_denoiser();
  const Denoiser d(c, 1);
  const DenoiserInput in = toy_input(c, static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(d.forward(in));
}
BENCHMARK(BM_DenoiserForward)->Arg(48)->Unit(benchmark::kMillisecond);

void BM_DenoiserForwardBackward(benchmark::State& state) {
  const DenoiserConfig c = toy_denoiser();
  Denoiser d(c, 1);
  const DenoiserInput in = toy_input(c, static_cast<int>(state.range(0)));
  const MatX g = MatX::Ones(in.frames(), c.x_dim);
  for (auto _ : state) {
    DenoiserTape tape;
    benchmark::DoNotOptimize(d.forward(in, &tape));
    d.backward(in, tape, g);
  }
}
BENCHMARK(BM_DenoiserForwardBackward)->Arg(48)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();

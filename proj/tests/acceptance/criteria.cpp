#include "criteria.hpp"

#include <fstream>
#include <map>
#include <random>

#include "cli.hpp"
#include "dexsynth/bps.hpp"
#include "dexsynth/denoiser.hpp"
#include "dexsynth/geometry.hpp"
#include "dexsynth/metrics.hpp"
#include "dexsynth/motion_frames.hpp"
#include "dexsynth/residual.hpp"
#include "dexsynth/sampling.hpp"
#include "dexsynth/scene_io.hpp"
#include "fixtures.hpp"

namespace dexsynth::acceptance {

namespace fs = std::filesystem;
using namespace dexsynth::testing;

std::string Report::summary() const {
  std::string s;
  for (const auto& n : notes_) s += (s.empty() ? "" : " ") + n;
  for (const auto& f : failed_) s += (s.empty() ? "" : " ") + ("FAILED[" + f + "]");
  return s;
}

namespace {

MatX gaussian(int rows, int cols, std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  MatX m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = g(rng);
  return m;
}

// ---------------------------------------------------------------------------
// 1. Rotations and forward kinematics

void rotation_fk(Report& r) {
  std::mt19937_64 rng(101);
  double worst = 0;
  for (int i = 0; i < 1000; ++i) {
    const Mat3 m = random_rotation(rng);
    worst = std::max(worst, (rot6d_to_matrix(matrix_to_rot6d(m)) - m).cwiseAbs().maxCoeff());
  }
  r.note("rot6d_err", worst);
  r.expect(worst < 1e-6, "6D round trip");

  const HandRig& rig = toy_rig();
  double equi = 0;
  for (int i = 0; i < 50; ++i) {
    const HandPose p = random_pose(rng);
    const Mat3 q = random_rotation(rng);
    const Vec3 t = random_vector(rng, 0.5);
    HandPose moved = p;
    moved.root_rot = matrix_to_rot6d(q * rot6d_to_matrix(p.root_rot));
    moved.trans = q * p.trans + t;
    const Points a = forward_kinematics(rig, p).vertices;
    const Points b = forward_kinematics(rig, moved).vertices;
    equi = std::max(equi, (b - ((a * q.transpose()).rowwise() + t.transpose())).cwiseAbs().maxCoeff());
  }
  r.note("fk_equivariance", equi);
  r.expect(equi < 1e-6, "FK equivariance");

  // Two bones along x; joint 1 bent by a quarter turn about z.
  const HandRig two = two_bone_rig();
  HandPose p = HandPose::zero();
  Mat3 bend;
  bend << 0, -1, 0, 1, 0, 0, 0, 0, 1;
  p.joint_rots[0] = matrix_to_rot6d(bend);
  const Points v = forward_kinematics(two, p).vertices;
  Points expected(3, 3);
  expected << 0.05, 0.01, 0.0, 0.5 * (0.1 + 0.09), 0.5 * (0.01 + 0.0), 0.0, 0.09, 0.05, 0.0;
  const double lbs = (v - expected).cwiseAbs().maxCoeff();
  r.note("lbs_err", lbs);
  r.expect(lbs < 1e-15, "2-bone LBS fixture");
}

// ---------------------------------------------------------------------------
// 2. Canonicalisation

void canonicalisation(Report& r) {
  std::mt19937_64 rng(202);
  ObjectSequenceWorld s;
  std::uniform_real_distribution<double> ang(-0.3, 0.3);
  for (int l = 0; l < 120; ++l) {
    s.rotation.push_back(random_rotation(rng));
    s.translation.push_back(random_vector(rng, 1.0));
    s.articulation.push_back(ang(rng));
  }
  const ObjectSequenceWorld back = integrate_canonical(world_to_canonical_object(s));
  double re = 0, de = 0;
  for (int l = 0; l < 120; ++l) {
    re = std::max(re, (back.rotation[l] - s.rotation[l]).norm());
    de = std::max(de, (back.translation[l] - s.translation[l]).norm());
  }
  r.note("R_err", re);
  r.note("D_err", de);
  r.expect(re < 1e-4, "rotation round trip");
  r.expect(de < 1e-6, "translation round trip");

  double inv = 0;
  const MatX base = world_to_canonical_object(s).features();
  for (int k = 0; k < 10; ++k) {
    const Mat3 q = random_rotation(rng);
    const Vec3 t = random_vector(rng, 3.0);
    ObjectSequenceWorld moved = s;
    for (int l = 0; l < 120; ++l) {
      moved.rotation[l] = q * s.rotation[l];
      moved.translation[l] = q * s.translation[l] + t;
    }
    inv = std::max(inv, (world_to_canonical_object(moved).features() - base).cwiseAbs().maxCoeff());
  }
  r.note("invariance", inv);
  r.expect(inv < 1e-6, "frame invariance of motion features");
}

// ---------------------------------------------------------------------------
// 3. Embeddings

void embeddings(Report& r) {
  MatX geo(2, 2);
  geo << 0, 1.2, 1.2, 0;
  EmbeddingOptions opt;
  opt.sigma_g = 1.0;
  const EmbeddingFit two = optimize_embeddings(geo, opt);
  const double d = (two.table.values.row(0) - two.table.values.row(1)).norm();
  const double optimum = 1.2 * 1.2 / 2.0;  // BCE(exp(-d), s) is minimal at exp(-d) = s
  r.note("two_vertex_err", std::abs(d - optimum));
  r.expect(std::abs(d - optimum) < 1e-3, "2-vertex optimum");

  const EmbeddingTable& table = toy_embedding();
  const HandRig& rig = toy_rig();
  r.expect(table.rows() == 200 && table.dim() == 3, "toy hand has V = 200, d = 3");
  const MatX g = geodesic_matrix(rig_mesh(rig, rig.template_vertices));
  std::vector<double> ge, em;
  for (int i = 0; i < table.rows(); ++i) {
    for (int j = i + 1; j < table.rows(); ++j) {
      ge.push_back(g(i, j));
      em.push_back((table.values.row(i) - table.values.row(j)).norm());
    }
  }
  const double rho = spearman_correlation(em, ge);
  int hits = 0;
  for (int i = 0; i < table.rows(); ++i) hits += nearest_by_embedding(table.values.row(i).transpose(), table.values) == i;
  const double retrieval = static_cast<double>(hits) / table.rows();
  r.note("spearman", rho);
  r.note("self_retrieval", retrieval);
  r.expect(rho >= 0.9, "Spearman >= 0.9");
  r.expect(retrieval >= 0.99, "self-retrieval >= 99%");
}

// ---------------------------------------------------------------------------
// 4. Kernels and residuals

ContactFrame random_frame(std::mt19937_64& rng, int points, int dim) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Points pts(points, 3);
  for (int i = 0; i < points; ++i) pts.row(i) = random_vector(rng, 0.1).transpose();
  ContactFrame f = ContactFrame::zeros(pts, dim);
  for (int q = 0; q < points; ++q) {
    for (int h = 0; h < kHands; ++h) {
      f.contact(q, h) = u(rng) < 0.3 ? 0.0 : u(rng);
      for (int k = 0; k < dim; ++k) f.embedding[h](q, k) = u(rng);
    }
  }
  return f;
}

void residuals(Report& r) {
  const double sigma = kDefaultContactSigma;
  double kernel = 0;
  for (int i = 0; i <= 1000; ++i) {
    const double dist = 5.0 * sigma * i / 1000.0;
    kernel = std::max(kernel, std::abs(prob_to_distance(distance_to_prob(dist, sigma), sigma) - dist));
  }
  r.note("p2d_d2p_err", kernel);
  r.expect(kernel < 1e-9, "P2D o D2P identity");

  const EmbeddingTable& table = toy_embedding();
  const BasisPointSet basis = BasisPointSet::sample(512, 0.12, 42);
  double worst_mean = 0;
  for (auto [obj, traj, hands] : {std::tuple{ObjectKind::Box, TrajectoryKind::Lift, HandsUsed::Right},
                                  std::tuple{ObjectKind::Sphere, TrajectoryKind::Arc, HandsUsed::Both},
                                  std::tuple{ObjectKind::HingedBox, TrajectoryKind::HingeOpen, HandsUsed::Both}}) {
    const Scene& s = fixture_scene(obj, traj, hands);
    std::vector<std::array<Points, kHands>> hv;
    const ContactSequence maps = scene_gt_maps(s, basis, &hv);
    std::vector<ResidualField> fields;
    for (int l = 0; l < s.frames(); ++l) fields.push_back(compute_residual(hv[l], table, maps.frames[l]));
    worst_mean = std::max(worst_mean, contact_region_residual(fields, maps.frames, table));
  }
  r.note("gt_residual_mm", worst_mean * 1000.0);
  r.expect(worst_mean < 0.002, "GT residual < 2 mm");

  std::mt19937_64 rng(404);
  const int v = table.rows();
  double lin = 0;
  bool scaling = true, neutral = true;
  for (int trial = 0; trial < 20; ++trial) {
    const ContactFrame f = random_frame(rng, 64, table.dim());
    const ResidualMatch m = match_residual(table, f);
    const std::array<Points, kHands> a{Points::Random(v, 3) * 0.1, Points::Random(v, 3) * 0.1};
    const std::array<Points, kHands> b{Points::Random(v, 3) * 0.1, Points::Random(v, 3) * 0.1};
    const std::array<Points, kHands> ab{a[0] + 3.0 * b[0], a[1] + 3.0 * b[1]};
    const std::array<Points, kHands> zero{Points::Zero(v, 3), Points::Zero(v, 3)};
    const auto ra = compute_residual(a, f, m), rb = compute_residual(b, f, m), rab = compute_residual(ab, f, m),
               r0 = compute_residual(zero, f, m);
    ContactFrame quarter = f;
    quarter.contact *= 0.25;
    const auto rq = compute_residual(a, table, quarter);
    ContactFrame empty = f;
    empty.clear_maps();
    const auto re = compute_residual(a, table, empty);
    for (int h = 0; h < kHands; ++h) {
      lin = std::max(lin, (rab.r[h] - (ra.r[h] + 3.0 * rb.r[h] - 3.0 * r0.r[h])).cwiseAbs().maxCoeff());
      scaling = scaling && rq.r[h] == 0.25 * ra.r[h];
      neutral = neutral && re.r[h].isZero(0.0);
    }
  }
  r.note("linearity_err", lin);
  r.expect(lin < 1e-15, "residual linearity");
  r.expect(scaling, "C-scaling exactness");
  r.expect(neutral, "zero-mask neutrality");
}

// ---------------------------------------------------------------------------
// 5. Geometry oracles

bool encloses(const Points& p, const Vec3& c, double radius) {
  for (int i = 0; i < p.rows(); ++i) {
    if ((p.row(i).transpose() - c).norm() > radius * (1 + 1e-12) + 1e-12) return false;
  }
  return true;
}

double brute_force_sphere(const Points& p) {
  const int n = static_cast<int>(p.rows());
  double best = std::numeric_limits<double>::infinity();
  auto consider = [&](const Vec3& c, double radius) {
    if (radius < best && encloses(p, c, radius)) best = radius;
  };
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      const Vec3 a = p.row(i), b = p.row(j);
      consider(0.5 * (a + b), 0.5 * (a - b).norm());
      for (int k = j + 1; k < n; ++k) {
        const Vec3 c = p.row(k);
        const Vec3 ab = b - a, ac = c - a, nrm = ab.cross(ac);
        if (nrm.squaredNorm() < 1e-20) continue;
        const Vec3 cc = a + (ac.squaredNorm() * nrm.cross(ab) + ab.squaredNorm() * ac.cross(nrm)) / (2.0 * nrm.squaredNorm());
        const double r3 = (cc - a).norm();
        consider(cc, r3);
        if (r3 >= best) continue;
        for (int l = k + 1; l < n; ++l) {
          const Vec3 d = p.row(l);
          Mat3 m;
          m.row(0) = (b - a).transpose();
          m.row(1) = (c - a).transpose();
          m.row(2) = (d - a).transpose();
          if (std::abs(m.determinant()) < 1e-15) continue;
          const Vec3 rhs(0.5 * (b.squaredNorm() - a.squaredNorm()), 0.5 * (c.squaredNorm() - a.squaredNorm()),
                         0.5 * (d.squaredNorm() - a.squaredNorm()));
          const Vec3 cs = m.partialPivLu().solve(rhs);
          consider(cs, (cs - a).norm());
        }
      }
    }
  }
  return best;
}

void geometry_oracles(Report& r) {
  std::mt19937_64 rng(505);
  std::normal_distribution<double> g(0.0, 1.0);
  Points pts(100, 3);
  for (int i = 0; i < 100; ++i) pts.row(i) << g(rng), 2.0 * g(rng), 0.5 * g(rng);
  const Sphere s = min_bounding_sphere(pts);
  const double brute = brute_force_sphere(pts);
  r.note("sphere_radius_diff", std::abs(s.radius - brute));
  r.expect(std::abs(s.radius - brute) < 1e-9 * brute && encloses(pts, s.center, s.radius + 1e-12), "bounding sphere");

  Points cloud(3000, 3);
  for (int i = 0; i < 3000; ++i) cloud.row(i) << 0.05 * g(rng), 0.03 * g(rng), 0.04 * g(rng);
  const BasisPointSet basis = BasisPointSet::sample(512, 0.15, 42);
  const Vec3 center(0.003, -0.01, 0.02);
  const BpsEncoding enc = bps_encode(cloud, basis, center);
  int mismatches = 0;
  for (int j = 0; j < basis.size(); ++j) {
    const Vec3 b = center + basis.offsets.row(j).transpose();
    Eigen::Index best;
    (cloud.rowwise() - b.transpose()).rowwise().squaredNorm().minCoeff(&best);
    mismatches += enc.nearest_index[j] != best;
  }
  r.note("bps_mismatches", mismatches);
  r.expect(mismatches == 0, "BPS exhaustive NN");

  const TriMesh a = make_box(Vec3(0.05, 0.05, 0.05), 0.01);
  const TriMesh b = make_box(Vec3(0.04, 0.03, 0.05), 0.01).transformed(Mat3::Identity(), Vec3(0.06, 0.02, 0.03));
  const double overlap = intersection_volume(a, b, 0.005);
  const double analytic = 3.0 * 6.0 * 7.0;
  r.note("box_overlap_cm3", overlap);
  r.expect(std::abs(overlap - analytic) <= 0.05 * analytic, "box overlap within 5%");

  const TriMesh sphere = make_icosphere(0.05, 4);
  const double pen = penetration_volume(sphere, make_box(Vec3(0.1, 0.1, 0.1), 0.02), 0.005);
  r.note("sphere_pen_cm3", pen);
  r.expect(std::abs(pen - 523.6) <= 0.05 * 523.6, "sphere penetration within 5%");
}

// ---------------------------------------------------------------------------
// 6. Diffusion

void diffusion(Report& r) {
  const NoiseSchedule s = NoiseSchedule::linear(1000, 1e-4, 2e-2);
  bool exact = s.beta.front() == 1e-4 && s.beta.back() == 2e-2;
  double prod = 1.0;
  for (int t = 1; t <= 1000; ++t) {
    prod *= 1.0 - s.beta[t - 1];
    exact = exact && s.alpha[t - 1] == 1.0 - s.beta[t - 1] && s.alpha_bar_at(t) == prod;
  }
  r.expect(exact, "schedule identities");

  std::mt19937_64 rng(606);
  const int trials = 10000;
  bool mc = true;
  for (int t : {10, 100, 400}) {
    double sum = 0, sq = 0;
    for (int n = 0; n < trials; ++n) {
      MatX x = MatX::Constant(1, 1, 1.0);
      for (int k = 1; k <= t; ++k) x = forward_step(x, k, gaussian(1, 1, rng), s);
      sum += x(0, 0);
      sq += x(0, 0) * x(0, 0);
    }
    const double mean = sum / trials, var = sq / trials - mean * mean;
    const double ab = s.alpha_bar_at(t);
    mc = mc && std::abs(mean - std::sqrt(ab)) < 3.0 * std::sqrt((1 - ab) / trials) &&
         std::abs(var - (1 - ab)) < 3.0 * (1 - ab) * std::sqrt(2.0 / trials);
  }
  r.expect(mc, "closed form vs iterated noising");

  const MatX x0 = gaussian(16, 9, rng);
  const MatX rec = reverse_chain(16, 9, s, 7, 1, [&](const MatX&, int) { return x0; });
  r.note("oracle_chain_err", (rec - x0).cwiseAbs().maxCoeff());
  r.expect((rec - x0).cwiseAbs().maxCoeff() < 1e-4, "oracle reverse chain");

  DenoiserConfig c;
  c.x_dim = 6;
  c.condition_dims = {5, 4};
  c.condition_hidden = 16;
  c.condition_out = 8;
  c.pool_in = 4;
  c.pool_width = 6;
  c.width = 16;
  c.blocks = 2;
  c.heads = 4;
  c.ff_width = 32;
  c.time_dim = 8;
  Denoiser net(c, 66);
  DenoiserInput in;
  const int frames = 6, verts = 3;
  in.x = gaussian(frames, c.x_dim, rng);
  in.t = 250;
  for (int d : c.condition_dims) in.conditions.push_back(gaussian(frames, d, rng));
  in.pool_vertices = verts;
  in.pool = gaussian(frames * kHands * verts, c.pool_in, rng);
  in.valid = {1, 1, 1, 1, 1, 0};
  const MatX w = gaussian(frames, c.x_dim, rng);
  DenoiserTape tape;
  net.forward(in, &tape);
  net.params().zero_grad();
  net.backward(in, tape, w);
  double worst = 0;
  for (auto& p : net.params().all()) {
    for (Eigen::Index i = 0; i < p.value.size(); ++i) {
      const double saved = p.value.data()[i];
      const double h = 1e-6 * std::max(1.0, std::abs(saved));
      p.value.data()[i] = saved + h;
      const double up = net.forward(in).cwiseProduct(w).sum();
      p.value.data()[i] = saved - h;
      const double down = net.forward(in).cwiseProduct(w).sum();
      p.value.data()[i] = saved;
      // Floor for gradients that vanish identically (attention key biases).
      worst = std::max(worst, relative_error(p.grad.data()[i], (up - down) / (2 * h), 1e-5));
    }
  }
  r.note("params", net.params().scalar_count());
  r.note("fd_rel_err", worst);
  r.expect(worst < 1e-3, "denoiser gradient check");
}

// ---------------------------------------------------------------------------
// 8. Determinism of every CLI command

std::map<std::string, std::string> tree(const fs::path& root) {
  std::map<std::string, std::string> out;
  if (fs::is_regular_file(root)) {
    std::ifstream in(root, std::ios::binary);
    out[root.filename().string()] = {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
    return out;
  }
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (!e.is_regular_file()) continue;
    std::ifstream in(e.path(), std::ios::binary);
    out[fs::relative(e.path(), root).string()] = {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  }
  return out;
}

void determinism(Report& r, const Options& options) {
  const fs::path root = options.work / "determinism";
  fs::remove_all(root);
  fs::create_directories(root);
  const nlohmann::json cfg = {
      {"data", {{"train_scenes", 3}, {"test_scenes", 1}, {"frames", 48}}},
      {"bps", {{"points", 64}, {"radius", 0.12}}},
      {"embedding", {{"steps", 500}}},
      {"diffusion", {{"steps", 50}}},
      {"window", {{"length", 24}, {"stride", 12}}},
      {"stage1", {{"width", 16}, {"blocks", 2}, {"heads", 2}, {"ff_width", 32}, {"time_dim", 8}, {"condition_hidden", 16},
                  {"condition_out", 8}, {"pool_width", 4}, {"batch", 2}, {"steps", 6}, {"log_every", 2}}},
      {"stage2", {{"width", 16}, {"blocks", 2}, {"heads", 2}, {"ff_width", 32}, {"time_dim", 8}, {"condition_hidden", 16},
                  {"condition_out", 8}, {"pool_width", 4}, {"batch", 2}, {"steps", 6}, {"log_every", 2}, {"pen_warmup", 3}}}};
  const std::string config = (root / "config.json").string();
  write_json(config, cfg);

  const std::string seed = "17";
  // Both runs use the same paths; the first run's outputs are moved aside.
  const fs::path d = root / "run";
  for (const std::string run : {"a", "b"}) {
    auto p = [&](const std::string& rel) { return (d / rel).string(); };
    const std::vector<std::pair<std::string, std::vector<std::string>>> commands = {
        {"synth-data", {"synth-data", "--out", p("data")}},
        {"embed-optimize", {"embed-optimize", "--rig", p("data/rig.json"), "--out", p("emb.json")}},
        {"build-maps", {"build-maps", "--data", p("data"), "--embedding", p("emb.json"), "--out", p("maps")}},
        {"train-stage1", {"train-stage1", "--data", p("data"), "--maps", p("maps"), "--embedding", p("emb.json"), "--out",
                          p("s1.dxa"), "--log", p("s1.csv")}},
        {"train-stage2", {"train-stage2", "--data", p("data"), "--maps", p("maps"), "--embedding", p("emb.json"), "--out",
                          p("s2.dxa"), "--log", p("s2.csv")}},
        {"generate", {"generate", "--input", p("data/scene_003.json"), "--stage1", p("s1.dxa"), "--stage2", p("s2.dxa"),
                      "--out", p("gen")}},
        {"evaluate", {"evaluate", "--scene", p("data/scene_003.json"), "--hands", p("gen/hands.json"), "--maps",
                      p("gen/maps.dxa"), "--rig", p("data/rig.json"), "--bps", p("maps/bps.json"), "--embedding",
                      p("emb.json"), "--out", p("eval")}},
        {"export-viz", {"export-viz", "--embedding", p("emb.json"), "--rig", p("data/rig.json"), "--maps",
                        p("gen/maps.dxa"), "--frame", "20", "--out", p("viz")}}};
    for (const auto& [name, args] : commands) {
      std::vector<std::string> full{"--config", config, "--seed", seed};
      full.insert(full.end(), args.begin(), args.end());
      r.expect(run_cli(full) == 0, name + " run " + run + " exited nonzero");
    }
    if (run == "a") fs::rename(d, root / "a");
  }
  const std::vector<std::pair<std::string, std::string>> outputs = {
      {"synth-data", "data"}, {"embed-optimize", "emb.json"}, {"build-maps", "maps"}, {"train-stage1", "s1.dxa"},
      {"train-stage1 log", "s1.csv"}, {"train-stage2", "s2.dxa"}, {"train-stage2 log", "s2.csv"}, {"generate", "gen"},
      {"evaluate", "eval"}, {"export-viz", "viz"}};
  int identical = 0;
  for (const auto& [name, rel] : outputs) {
    if (!fs::exists(root / "a" / rel) || !fs::exists(d / rel)) {
      r.expect(false, name + " output missing");
      continue;
    }
    const auto a = tree(root / "a" / rel), b = tree(d / rel);
    const bool same = !a.empty() && a == b;
    identical += same;
    r.expect(same, name + " differs");
  }
  r.note("identical_outputs", std::to_string(identical) + "/" + std::to_string(outputs.size()));
  if (!options.keep) fs::remove_all(root);
}

}  // namespace

std::vector<Criterion> criteria(const Options& options) {
  return {
      {1, "rotation/FK suite", 5, rotation_fk},
      {2, "canonicalization suite", 5, canonicalisation},
      {3, "embedding suite", 120, embeddings},
      {4, "kernel/residual suite", 30, residuals},
      {5, "geometry oracles", 60, geometry_oracles},
      {6, "diffusion suite", 180, diffusion},
      {7, "end-to-end toy run", 7200, [options](Report& r) { end_to_end(r, options); }},
      {8, "CLI determinism", 1800, [options](Report& r) { determinism(r, options); }},
  };
}

}  // namespace dexsynth::acceptance

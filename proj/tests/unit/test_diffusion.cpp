#include <doctest.h>

#include <random>

#include "dexsynth/denoiser.hpp"
#include "dexsynth/sampling.hpp"
#include "dexsynth/schedule.hpp"
#include "fixtures.hpp"

using namespace dexsynth;

namespace {

MatX gaussian(int rows, int cols, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> g(0.0, scale);
  MatX m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = g(rng);
  return m;
}

DenoiserConfig small_config() {
  DenoiserConfig c;
  c.x_dim = 5;
  c.condition_dims = {4, 3};
  c.condition_hidden = 8;
  c.condition_out = 6;
  c.pool_in = 4;
  c.pool_width = 5;
  c.width = 16;
  c.blocks = 2;
  c.heads = 4;
  c.ff_width = 24;
  c.time_dim = 8;
  return c;
}

DenoiserInput small_input(const DenoiserConfig& c, std::mt19937_64& rng, int frames = 6, int verts = 3) {
  DenoiserInput in;
  in.x = gaussian(frames, c.x_dim, rng);
  in.t = 37;
  for (int d : c.condition_dims) in.conditions.push_back(gaussian(frames, d, rng));
  in.pool_vertices = verts;
  in.pool = gaussian(frames * kHands * verts, c.pool_in, rng);
  in.valid.assign(frames, 1);
  in.valid[frames - 1] = 0;
  return in;
}

}  // namespace

TEST_SUITE("schedule") {
  TEST_CASE("linear schedule identities") {
    const NoiseSchedule s = NoiseSchedule::linear(1000, 1e-4, 2e-2);
    REQUIRE(s.steps() == 1000);
    CHECK(s.beta.front() == 1e-4);
    CHECK(s.beta.back() == 2e-2);
    double prod = 1.0;
    for (int t = 1; t <= 1000; ++t) {
      CHECK(s.alpha[t - 1] == 1.0 - s.beta[t - 1]);
      prod *= s.alpha[t - 1];
      CHECK(s.alpha_bar_at(t) == prod);
    }
    CHECK(s.alpha_bar_at(0) == 1.0);
    CHECK_THROWS_AS(s.alpha_bar_at(1001), Error);
    CHECK_THROWS_AS(NoiseSchedule::from_betas({0.1, 0.05}), Error);
    CHECK_THROWS_AS(NoiseSchedule::from_betas({1.0}), Error);
  }

  TEST_CASE("posterior coefficients match the closed form") {
    const NoiseSchedule s = NoiseSchedule::linear(1000);
    for (int t : {2, 10, 500, 1000}) {
      const double ab = s.alpha_bar_at(t), abp = s.alpha_bar_at(t - 1), b = s.beta[t - 1];
      const PosteriorCoefficients c = posterior_coefficients(ab, abp);
      CHECK(c.c0 == doctest::Approx(std::sqrt(abp) * b / (1 - ab)).epsilon(1e-12));
      CHECK(c.ct == doctest::Approx(std::sqrt(1 - b) * (1 - abp) / (1 - ab)).epsilon(1e-12));
      CHECK(c.variance == doctest::Approx((1 - abp) / (1 - ab) * b).epsilon(1e-12));
    }
    const PosteriorCoefficients last = posterior_coefficients(s.alpha_bar_at(1), 1.0);
    CHECK(last.c0 == doctest::Approx(1.0));
    CHECK(last.ct == doctest::Approx(0.0));
    CHECK(last.variance == doctest::Approx(0.0));
  }

  TEST_CASE("closed-form noising matches iterated steps") {
    const NoiseSchedule s = NoiseSchedule::linear(1000);
    std::mt19937_64 rng(1);
    const int trials = 10000;
    for (int t : {1, 50, 300}) {
      MatX iter(trials, 1), closed(trials, 1);
      for (int n = 0; n < trials; ++n) {
        MatX x = MatX::Constant(1, 1, 1.5);
        for (int k = 1; k <= t; ++k) x = forward_step(x, k, gaussian(1, 1, rng), s);
        iter(n, 0) = x(0, 0);
        closed(n, 0) = forward_noise(MatX::Constant(1, 1, 1.5), t, gaussian(1, 1, rng), s)(0, 0);
      }
      const double mean = 1.5 * std::sqrt(s.alpha_bar_at(t));
      const double var = 1.0 - s.alpha_bar_at(t);
      for (const MatX* m : {&iter, &closed}) {
        const double mu = m->mean();
        const double v = (m->array() - mu).square().sum() / (trials - 1);
        CHECK(std::abs(mu - mean) < 3.0 * std::sqrt(var / trials));
        CHECK(std::abs(v - var) < 3.0 * var * std::sqrt(2.0 / (trials - 1)));
      }
    }
  }

  TEST_CASE("strided timesteps") {
    CHECK(sampling_timesteps(10, 1) == std::vector<int>{10, 9, 8, 7, 6, 5, 4, 3, 2, 1});
    CHECK(sampling_timesteps(10, 4) == std::vector<int>{10, 6, 2});
    CHECK_THROWS_AS(sampling_timesteps(10, 0), Error);
  }
}

TEST_SUITE("sampling") {
  TEST_CASE("oracle reverse chain reconstructs x0") {
    const NoiseSchedule s = NoiseSchedule::linear(1000);
    std::mt19937_64 rng(2);
    const MatX x0 = gaussian(12, 7, rng);
    for (int stride : {1, 10}) {
      std::vector<int> seen;
      const MatX out = reverse_chain(
          12, 7, s, 5, stride, [&](const MatX&, int) { return x0; }, [&](int t, const MatX&) { seen.push_back(t); });
      CHECK((out - x0).cwiseAbs().maxCoeff() < 1e-4);
      CHECK(seen == sampling_timesteps(1000, stride));
    }
  }

  TEST_CASE("noise-consistent oracle follows the forward process") {
    // Predict x0 from x_t assuming the noise is known: the chain should stay
    // on the forward trajectory of the same x0.
    const NoiseSchedule s = NoiseSchedule::linear(200);
    std::mt19937_64 rng(3);
    const MatX x0 = gaussian(4, 3, rng);
    const MatX out = reverse_chain(4, 3, s, 9, 1, [&](const MatX& x_t, int t) {
      const double ab = s.alpha_bar_at(t);
      const MatX eps = (x_t - std::sqrt(ab) * x0) / std::sqrt(1 - ab);
      return MatX((x_t - std::sqrt(1 - ab) * eps) / std::sqrt(ab));
    });
    CHECK((out - x0).cwiseAbs().maxCoeff() < 1e-9);
  }

  TEST_CASE("reverse chain is deterministic in the seed") {
    const NoiseSchedule s = NoiseSchedule::linear(50);
    auto shrink = [](const MatX& x, int) { return MatX(0.5 * x); };
    CHECK(reverse_chain(3, 2, s, 4, 1, shrink) == reverse_chain(3, 2, s, 4, 1, shrink));
    CHECK(reverse_chain(3, 2, s, 4, 1, shrink) != reverse_chain(3, 2, s, 5, 1, shrink));
  }
}

TEST_SUITE("denoiser") {
  TEST_CASE("analytic gradients match finite differences for every parameter") {
    const DenoiserConfig c = small_config();
    Denoiser net(c, 3);
    std::mt19937_64 rng(4);
    const DenoiserInput in = small_input(c, rng);
    const MatX g = gaussian(in.frames(), c.x_dim, rng);
    auto loss = [&]() { return net.forward(in).cwiseProduct(g).sum(); };

    DenoiserTape tape;
    net.forward(in, &tape);
    net.params().zero_grad();
    net.backward(in, tape, g);

    double worst = 0.0;
    std::string worst_name;
    long checked = 0;
    for (auto& p : net.params().all()) {
      for (Eigen::Index i = 0; i < p.value.size(); ++i) {
        const double saved = p.value.data()[i];
        const double h = 1e-6 * std::max(1.0, std::abs(saved));
        p.value.data()[i] = saved + h;
        const double up = loss();
        p.value.data()[i] = saved - h;
        const double down = loss();
        p.value.data()[i] = saved;
        const double fd = (up - down) / (2 * h);
        // Gradients that vanish identically (e.g. attention key biases) are
        // compared against a 1e-5 floor instead of their own magnitude.
        const double err = dexsynth::testing::relative_error(p.grad.data()[i], fd, 1e-5);
        if (err > worst) worst = err, worst_name = p.name;
        ++checked;
      }
    }
    MESSAGE("checked " << checked << " parameters, worst relative error " << worst << " in " << worst_name);
    CHECK(checked == static_cast<long>(net.params().scalar_count()));
    CHECK(worst < 1e-3);
  }

  TEST_CASE("masked frames do not influence valid outputs") {
    const DenoiserConfig c = small_config();
    const Denoiser net(c, 5);
    std::mt19937_64 rng(6);
    DenoiserInput in = small_input(c, rng);
    const MatX a = net.forward(in);
    in.x.row(in.frames() - 1).setConstant(100.0);
    in.conditions[0].row(in.frames() - 1).setConstant(-3.0);
    const MatX b = net.forward(in);
    CHECK((a.topRows(in.frames() - 1) - b.topRows(in.frames() - 1)).cwiseAbs().maxCoeff() < 1e-12);
  }

  TEST_CASE("zero output projection gives zero output") {
    const DenoiserConfig c = small_config();
    Denoiser net(c, 7);
    for (auto& p : net.params().all()) {
      if (p.name.rfind("out.", 0) == 0) p.value.setZero();
    }
    std::mt19937_64 rng(8);
    CHECK(net.forward(small_input(c, rng)).isZero(0.0));
  }

  TEST_CASE("checkpoint round trip reproduces outputs") {
    const DenoiserConfig c = small_config();
    const Denoiser net(c, 9);
    const auto path = std::filesystem::temp_directory_path() / "dexsynth_denoiser_roundtrip.dxa";
    net.save(path, {{"step", 12}});
    nlohmann::json meta;
    const Denoiser back = Denoiser::load(path, &meta);
    CHECK(meta.at("step") == 12);
    std::mt19937_64 rng(10);
    const DenoiserInput in = small_input(c, rng);
    CHECK(net.forward(in) == back.forward(in));
    CHECK(back.config().to_json() == c.to_json());
    std::filesystem::remove(path);
  }

  TEST_CASE("initialisation is deterministic in the seed") {
    const DenoiserConfig c = small_config();
    const Denoiser a(c, 11), b(c, 11), d(c, 12);
    CHECK(a.params().all()[0].value == b.params().all()[0].value);
    CHECK(a.params().all()[0].value != d.params().all()[0].value);
  }

  TEST_CASE("input shape errors are reported") {
    const DenoiserConfig c = small_config();
    const Denoiser net(c, 1);
    std::mt19937_64 rng(2);
    DenoiserInput in = small_input(c, rng);
    in.pool_vertices = 2;
    CHECK_THROWS_AS(net.forward(in), Error);
    in = small_input(c, rng);
    in.conditions.pop_back();
    CHECK_THROWS_AS(net.forward(in), Error);
  }

  TEST_CASE("feature normaliser round trip and floor") {
    std::mt19937_64 rng(3);
    MatX a = gaussian(20, 4, rng, 3.0);
    a.col(2).setConstant(1.0);
    const FeatureNormalizer n = FeatureNormalizer::fit({a, MatX(a.topRows(5))});
    CHECK(n.std[2] == 1e-3);
    CHECK((n.invert(n.apply(a)) - a).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((FeatureNormalizer::from_json(n.to_json()).apply(a) - n.apply(a)).norm() == 0.0);
  }
}

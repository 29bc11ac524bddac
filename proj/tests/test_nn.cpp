#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <random>

#include "hpk/gradcheck.hpp"
#include "hpk/loss.hpp"
#include "hpk/optim.hpp"
#include "oracles.hpp"

using namespace hpk;

namespace {

LayerSpec conv_spec(int k, int s, int p, int out_ch) {
  LayerSpec l;
  l.kind = LayerKind::conv;
  l.kernel = k;
  l.stride = s;
  l.padding = p;
  l.out_channels = out_ch;
  return l;
}

LayerSpec pool_spec(int k, int s, int p = 0) {
  LayerSpec l;
  l.kind = LayerKind::maxpool;
  l.kernel = k;
  l.stride = s;
  l.padding = p;
  return l;
}

}  // namespace

TEST_CASE("tensor shape bookkeeping") {
  Tensor<float> t({2, 3, 4});
  REQUIRE(t.size() == 24);
  t.at(1, 2, 3) = 5.f;
  REQUIRE(t.data[23] == 5.f);
  REQUIRE_THROWS_AS(Tensor<float>({2, 0}), ConfigError);
  t.data[0] = std::numeric_limits<float>::quiet_NaN();
  REQUIRE_THROWS_AS(check_finite(t, "t"), NumericError);
}

TEST_CASE("conv2d basics") {
  SECTION("1x1 kernel scales the input") {
    Tensor<float> in({1, 3, 3});
    in.fill(1.f);
    Tensor<float> w({1, 1, 1, 1});
    w[0] = 2.f;
    Tensor<float> b({1});
    const Tensor<float> out = conv2d(in, w, b, conv_spec(1, 1, 0, 1));
    REQUIRE(out.shape == std::vector<int>{1, 3, 3});
    for (float v : out.data) REQUIRE(v == 2.f);
  }
  SECTION("k3 s1 p1 preserves spatial size") {
    Tensor<float> in({1, 4, 4});
    Tensor<float> w({1, 1, 3, 3});
    Tensor<float> b({1});
    const Tensor<float> out = conv2d(in, w, b, conv_spec(3, 1, 1, 1));
    REQUIRE(out.shape == std::vector<int>{1, 4, 4});
  }
  SECTION("random case matches the nested-loop reference") {
    std::mt19937_64 rng(42);
    Tensor<float> in({2, 5, 5});
    in.fill_uniform(rng, -1, 1);
    Tensor<float> w({3, 2, 3, 3});
    w.fill_uniform(rng, -1, 1);
    Tensor<float> b({3});
    b.fill_uniform(rng, -1, 1);
    const Tensor<float> got = conv2d(in, w, b, conv_spec(3, 2, 0, 3));
    const Tensor<float> want = oracle::conv_reference(in, w, b, 3, 2, 0, 0, 0, 0);
    REQUIRE(got.shape == want.shape);
    for (std::size_t i = 0; i < got.size(); ++i)
      REQUIRE_THAT(got[i], Catch::Matchers::WithinAbs(want[i], 1e-6));
  }
  SECTION("shape mismatch is a configuration error") {
    Tensor<float> in({2, 5, 5});
    Tensor<float> w({3, 1, 3, 3});
    Tensor<float> b({3});
    REQUIRE_THROWS_AS(conv2d(in, w, b, conv_spec(3, 1, 0, 3)), ConfigError);
  }
  SECTION("same padding hits the ceil rule, including even kernels") {
    Tensor<float> in({1, 20, 20});
    Tensor<float> w({1, 1, 6, 6});
    Tensor<float> b({1});
    LayerSpec s = conv_spec(6, 1, kPadSame, 1);
    REQUIRE(conv2d(in, w, b, s).shape == std::vector<int>{1, 20, 20});
    const Tensor<float> want =
        oracle::conv_reference(in, w, b, 6, 1, resolve_padding(20, s).lo,
                               resolve_padding(20, s).hi, resolve_padding(20, s).lo,
                               resolve_padding(20, s).hi);
    REQUIRE(conv2d(in, w, b, s).data == want.data);
  }
}

TEST_CASE("conv2d determinism") {
  std::mt19937_64 rng(7);
  Tensor<float> in({3, 9, 11});
  in.fill_uniform(rng, -1, 1);
  Tensor<float> w({4, 3, 3, 3});
  w.fill_uniform(rng, -1, 1);
  Tensor<float> b({4});
  const Tensor<float> a = conv2d(in, w, b, conv_spec(3, 2, 1, 4));
  const Tensor<float> c = conv2d(in, w, b, conv_spec(3, 2, 1, 4));
  REQUIRE(a.data == c.data);  // bit identical
}

TEST_CASE("maxpool2d basics") {
  SECTION("constant input stays constant") {
    Tensor<float> in({1, 4, 4});
    in.fill(3.5f);
    const Tensor<float> out = maxpool2d(in, pool_spec(2, 2));
    for (float v : out.data) REQUIRE(v == 3.5f);
  }
  SECTION("2x2 window takes the max") {
    Tensor<float> in({1, 2, 2});
    in.data = {1, 2, 3, 4};
    const Tensor<float> out = maxpool2d(in, pool_spec(2, 2));
    REQUIRE(out.size() == 1);
    REQUIRE(out[0] == 4.f);
  }
  SECTION("random case matches the reference") {
    std::mt19937_64 rng(3);
    Tensor<float> in({2, 7, 9});
    in.fill_uniform(rng, -5, 5);
    const Tensor<float> got = maxpool2d(in, pool_spec(3, 2));
    const Tensor<float> want = oracle::maxpool_reference(in, 3, 2, 0, 0, 0, 0);
    REQUIRE(got.data == want.data);
  }
  SECTION("tie routes gradient to the lowest index") {
    Tensor<float> in({1, 2, 2});
    in.fill(1.f);
    int argmax[1];
    Tensor<float> out({1, 1, 1});
    maxpool2d_forward(in.ptr(), 1, 2, 2, 2, 2, {0, 0}, {0, 0}, out.ptr(), 1, 1, argmax);
    REQUIRE(argmax[0] == 0);
  }
}

TEST_CASE("softmax cross entropy") {
  SECTION("uniform logits") {
    float logits[2] = {0.3f, 0.3f};
    REQUIRE_THAT(softmax_cross_entropy(logits, 2, 0), Catch::Matchers::WithinAbs(std::log(2.0), 1e-6));
  }
  SECTION("confident correct prediction") {
    float logits[2] = {10.f, -10.f};
    REQUIRE_THAT(softmax_cross_entropy(logits, 2, 0),
                 Catch::Matchers::WithinRel(2.061e-9, 1e-3));
  }
  SECTION("target out of range") {
    float logits[3] = {0, 0, 0};
    REQUIRE_THROWS_AS(softmax_cross_entropy(logits, 3, 3), ConfigError);
    REQUIRE_THROWS_AS(softmax_cross_entropy(logits, 1, 0), ConfigError);
  }
  SECTION("softmax output is a probability vector") {
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 20; ++trial) {
      const int k = 2 + uniform_int(rng, 6);
      std::vector<float> logits(static_cast<std::size_t>(k)), probs(static_cast<std::size_t>(k));
      for (auto& v : logits) v = static_cast<float>(uniform(rng, -8, 8));
      softmax(logits.data(), k, probs.data());
      double sum = 0;
      for (float p : probs) {
        REQUIRE(p >= 0.f);
        sum += p;
      }
      REQUIRE_THAT(sum, Catch::Matchers::WithinAbs(1.0, 1e-6));
    }
  }
  SECTION("gradient matches central differences") {
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 5; ++trial) {
      const int k = 2 + uniform_int(rng, 5);
      Tensor<double> logits({k});
      logits.fill_uniform(rng, -2, 2);
      const int target = uniform_int(rng, k);
      Tensor<double> grad;
      softmax_cross_entropy(logits, target, &grad);
      const double eps = 1e-3;
      for (int i = 0; i < k; ++i) {
        Tensor<double> up = logits, dn = logits;
        up[static_cast<std::size_t>(i)] += eps;
        dn[static_cast<std::size_t>(i)] -= eps;
        const double fd =
            (softmax_cross_entropy(up, target) - softmax_cross_entropy(dn, target)) / (2 * eps);
        const double rel = std::abs(fd - grad[static_cast<std::size_t>(i)]) /
                           std::max({std::abs(fd), std::abs(grad[static_cast<std::size_t>(i)]), 1e-6});
        REQUIRE(rel <= 1e-4);
      }
    }
  }
}

TEST_CASE("l1 and l2 losses") {
  Tensor<float> mask({2});
  mask.fill(1.f);
  SECTION("exact prediction") {
    Tensor<float> p({2}), t({2});
    p.data = {1.f, -2.f};
    t.data = {1.f, -2.f};
    REQUIRE(l1_loss(p, t, mask) == 0.0);
    REQUIRE(l2_loss(p, t, mask) == 0.0);
  }
  SECTION("hand values") {
    Tensor<float> p({2}), t({2});
    p.data = {1.f, 2.f};
    t.data = {0.f, 0.f};
    REQUIRE_THAT(l1_loss(p, t, mask), Catch::Matchers::WithinAbs(1.5, 1e-7));
    REQUIRE_THAT(l2_loss(p, t, mask), Catch::Matchers::WithinAbs(2.5, 1e-7));
  }
  SECTION("empty mask is loss 0 with zero gradient") {
    Tensor<float> p({3}), t({3}), m({3}), g;
    p.data = {1, 2, 3};
    REQUIRE(l1_loss(p, t, m, &g) == 0.0);
    for (float v : g.data) REQUIRE(v == 0.f);
  }
  SECTION("masked count normalization") {
    Tensor<float> p({4}), t({4}), m({4});
    p.data = {2, 2, 2, 2};
    m.data = {1, 0, 0, 1};
    REQUIRE_THAT(l1_loss(p, t, m), Catch::Matchers::WithinAbs(2.0, 1e-7));
  }
  SECTION("nonnegative, zero only at masked equality") {
    std::mt19937_64 rng(17);
    for (int trial = 0; trial < 50; ++trial) {
      Tensor<float> p({6}), t({6}), m({6});
      p.fill_uniform(rng, -2, 2);
      t.fill_uniform(rng, -2, 2);
      for (auto& v : m.data) v = uniform01(rng) < 0.5 ? 1.f : 0.f;
      const double l = l1_loss(p, t, m);
      REQUIRE(l >= 0.0);
      bool masked_equal = true;
      for (std::size_t i = 0; i < 6; ++i)
        if (m[i] != 0.f && p[i] != t[i]) masked_equal = false;
      REQUIRE((l == 0.0) == masked_equal);
    }
  }
  SECTION("gradients match finite differences away from kinks") {
    std::mt19937_64 rng(23);
    for (int trial = 0; trial < 5; ++trial) {
      Tensor<double> p({8}), t({8}), m({8}), g1, g2;
      p.fill_uniform(rng, -3, 3);
      t.fill_uniform(rng, -3, 3);
      m.fill(1.0);
      l1_loss(p, t, m, &g1);
      l2_loss(p, t, m, &g2);
      const double eps = 1e-4;
      for (std::size_t i = 0; i < 8; ++i) {
        if (std::abs(p[i] - t[i]) <= 1e-3) continue;  // skip the L1 kink
        Tensor<double> up = p, dn = p;
        up[i] += eps;
        dn[i] -= eps;
        const double fd1 = (l1_loss(up, t, m) - l1_loss(dn, t, m)) / (2 * eps);
        const double fd2 = (l2_loss(up, t, m) - l2_loss(dn, t, m)) / (2 * eps);
        REQUIRE_THAT(g1[i], Catch::Matchers::WithinAbs(fd1, 1e-6));
        REQUIRE_THAT(g2[i], Catch::Matchers::WithinRel(fd2, 1e-6));
      }
    }
  }
}

TEST_CASE("sgd with momentum") {
  SECTION("plain step") {
    Tensor<float> p({1});
    p.data = {1.f};
    p.ensure_grad();
    p.grad = {1.f};
    std::vector<ParamRef<float>> params{{"p", &p}};
    OptimState<float> st;
    st.learning_rate = 0.1;
    st.momentum = 0.0;
    sgd_momentum_step(params, st);
    REQUIRE_THAT(p.data[0], Catch::Matchers::WithinAbs(0.9, 1e-7));
    REQUIRE(st.step_count == 1);
  }
  SECTION("second step compounds the velocity") {
    Tensor<float> p({1});
    p.ensure_grad();
    p.grad = {2.f};
    std::vector<ParamRef<float>> params{{"p", &p}};
    OptimState<float> st;
    st.learning_rate = 0.05;
    st.momentum = 0.9;
    sgd_momentum_step(params, st);
    const float after_one = p.data[0];
    REQUIRE_THAT(after_one, Catch::Matchers::WithinAbs(-0.1, 1e-7));
    sgd_momentum_step(params, st);
    REQUIRE_THAT(p.data[0] - after_one, Catch::Matchers::WithinAbs(-0.05 * 2.0 * 1.9, 1e-6));
  }
  SECTION("zero gradient with zero velocity leaves parameters alone") {
    Tensor<float> p({3});
    p.data = {1, 2, 3};
    p.ensure_grad();
    std::vector<ParamRef<float>> params{{"p", &p}};
    OptimState<float> st;
    sgd_momentum_step(params, st);
    REQUIRE(p.data == std::vector<float>{1, 2, 3});
  }
  SECTION("non-finite parameter aborts") {
    Tensor<float> p({1});
    p.data = {1.f};
    p.ensure_grad();
    p.grad = {std::numeric_limits<float>::infinity()};
    std::vector<ParamRef<float>> params{{"p", &p}};
    OptimState<float> st;
    REQUIRE_THROWS_AS(sgd_momentum_step(params, st), NumericError);
  }
  SECTION("momentum ramp") {
    MomentumSchedule sched;
    REQUIRE_THAT(sched.at(0), Catch::Matchers::WithinAbs(0.5, 1e-12));
    REQUIRE_THAT(sched.at(250), Catch::Matchers::WithinAbs(2.0 / 3.0, 1e-12));
    REQUIRE(sched.at(100000) == 0.95);
    REQUIRE(lr_at_epoch(0.1, 0, 0.5, 5) == 0.1);
    REQUIRE_THAT(lr_at_epoch(0.1, 10, 0.5, 5), Catch::Matchers::WithinAbs(0.025, 1e-12));
  }
}

TEST_CASE("layer gradients match finite differences") {
  // Scalar loss = sum(out * proj) with a fixed random projection; all checks
  // on the double instantiation with 1e-3 steps.
  std::mt19937_64 rng(31);
  const double eps = 1e-3;

  SECTION("conv2d backward: input, weights, bias") {
    for (int trial = 0; trial < 5; ++trial) {
      const int C = 1 + uniform_int(rng, 2), O = 1 + uniform_int(rng, 2);
      const int H = 5 + uniform_int(rng, 3), W = 5 + uniform_int(rng, 3);
      const int k = 2 + uniform_int(rng, 2), s = 1 + uniform_int(rng, 2), p = uniform_int(rng, 2);
      Tensor<double> in({C, H, W}), w({O, C, k, k}), b({O});
      in.fill_uniform(rng, -1, 1);
      w.fill_uniform(rng, -1, 1);
      b.fill_uniform(rng, -1, 1);
      LayerSpec spec = conv_spec(k, s, p, O);
      const Tensor<double> out0 = conv2d(in, w, b, spec);
      Tensor<double> proj(out0.shape);
      proj.fill_uniform(rng, -1, 1);
      auto loss = [&](const Tensor<double>& ti, const Tensor<double>& tw,
                      const Tensor<double>& tb) {
        const Tensor<double> out = conv2d(ti, tw, tb, spec);
        double l = 0;
        for (std::size_t i = 0; i < out.size(); ++i) l += out[i] * proj[i];
        return l;
      };
      Tensor<double> din(in.shape), dw(w.shape), db(b.shape);
      conv2d_backward(in.ptr(), C, H, W, w.ptr(), O, k, s, resolve_padding(W, spec),
                      resolve_padding(H, spec), proj.ptr(), out0.dim(1), out0.dim(2), din.ptr(),
                      dw.ptr(), db.ptr());
      auto check = [&](Tensor<double>& target, const Tensor<double>& analytic, int count) {
        for (int c = 0; c < count; ++c) {
          const std::size_t i = rng() % target.size();
          const double saved = target[i];
          target[i] = saved + eps;
          const double up = loss(in, w, b);
          target[i] = saved - eps;
          const double dn = loss(in, w, b);
          target[i] = saved;
          const double fd = (up - dn) / (2 * eps);
          const double rel =
              std::abs(fd - analytic[i]) / std::max({std::abs(fd), std::abs(analytic[i]), 1e-6});
          REQUIRE(rel <= 1e-3);
        }
      };
      check(in, din, 8);
      check(w, dw, 8);
      check(b, db, 2);
    }
  }

  SECTION("maxpool backward") {
    for (int trial = 0; trial < 5; ++trial) {
      const int C = 1 + uniform_int(rng, 2);
      const int H = 6 + uniform_int(rng, 3), W = 6 + uniform_int(rng, 3);
      Tensor<double> in({C, H, W});
      in.fill_uniform(rng, -1, 1);
      LayerSpec spec = pool_spec(2 + uniform_int(rng, 2), 2);
      const int OH = out_extent(H, spec), OW = out_extent(W, spec);
      Tensor<double> out({C, OH, OW});
      std::vector<int> argmax(out.size());
      maxpool2d_forward(in.ptr(), C, H, W, spec.kernel, spec.stride, resolve_padding(W, spec),
                        resolve_padding(H, spec), out.ptr(), OH, OW, argmax.data());
      Tensor<double> proj(out.shape);
      proj.fill_uniform(rng, -1, 1);
      Tensor<double> din(in.shape);
      maxpool2d_backward(argmax.data(), C, H, W, proj.ptr(), OH, OW, din.ptr());
      auto eval = [&](std::vector<int>* arg) {
        Tensor<double> o({C, OH, OW});
        std::vector<int> a(o.size());
        maxpool2d_forward(in.ptr(), C, H, W, spec.kernel, spec.stride, resolve_padding(W, spec),
                          resolve_padding(H, spec), o.ptr(), OH, OW, a.data());
        if (arg) *arg = a;
        double l = 0;
        for (std::size_t q = 0; q < o.size(); ++q) l += o[q] * proj[q];
        return l;
      };
      for (int c = 0; c < 12; ++c) {
        const std::size_t i = rng() % in.size();
        const double saved = in[i];
        std::vector<int> arg_up, arg_dn;
        in[i] = saved + eps;
        const double up = eval(&arg_up);
        in[i] = saved - eps;
        const double dn = eval(&arg_dn);
        in[i] = saved;
        if (arg_up != arg_dn) continue;  // perturbation crossed an argmax tie
        const double fd = (up - dn) / (2 * eps);
        REQUIRE_THAT(din[i], Catch::Matchers::WithinAbs(fd, 1e-6));
      }
    }
  }

  SECTION("relu backward") {
    Tensor<double> in({40});
    in.fill_uniform(rng, -1, 1);
    Tensor<double> proj({40});
    proj.fill_uniform(rng, -1, 1);
    Tensor<double> din({40});
    relu_backward(in.ptr(), proj.ptr(), in.size(), din.ptr());
    for (std::size_t i = 0; i < in.size(); ++i) {
      if (std::abs(in[i]) < 1e-3) continue;
      const double saved = in[i];
      auto loss = [&]() {
        Tensor<double> o({40});
        relu_forward(in.ptr(), in.size(), o.ptr());
        double l = 0;
        for (std::size_t q = 0; q < o.size(); ++q) l += o[q] * proj[q];
        return l;
      };
      in[i] = saved + eps;
      const double up = loss();
      in[i] = saved - eps;
      const double dn = loss();
      in[i] = saved;
      REQUIRE_THAT(din[i], Catch::Matchers::WithinAbs((up - dn) / (2 * eps), 1e-6));
    }
  }
}

TEST_CASE("whole-network gradient check") {
  std::vector<LayerSpec> arch{conv_spec(3, 2, kPadSame, 4),
                              LayerSpec{LayerKind::relu},
                              pool_spec(2, 2, kPadSame),
                              conv_spec(3, 1, kPadSame, 6),
                              LayerSpec{LayerKind::relu}};
  Network<double> net = make_network<double>(arch, 3, 123);
  REQUIRE(net.stride == 4);
  const GridGeometry geom = grid_geometry(net, 16, 16);
  std::mt19937_64 rng(5);
  Tensor<double> input({3, 16, 16});
  input.fill_uniform(rng, 0, 1);
  std::vector<VehicleBox> boxes{{{2, 2, 14, 14}, 30.0, 1.0}};
  std::vector<LaneAnnotation> lanes{{1, {{1, 1, 5}, {15, 15, 40}}, {}}};
  const GridLabel label = rasterize_labels(boxes, lanes, geom);
  REQUIRE(grad_check(net, input, label, geom, 1e-3, 77, 120) <= 1e-3);
}

TEST_CASE("checkpoint round trip") {
  std::vector<LayerSpec> arch{conv_spec(3, 4, kPadSame, 4)};
  Network<float> net = make_network<float>(arch, 3, 9);
  const auto path = std::filesystem::temp_directory_path() / "hpk_test_ckpt.hpkw";
  OptimState<float> opt;
  opt.step_count = 42;
  auto params = parameters(net);
  for (auto& p : params) opt.velocity.emplace_back(p.tensor->size(), 0.25f);
  save_network(path.string(), net, &opt);

  Network<float> loaded = make_network<float>(arch, 3, 1);  // different init
  OptimState<float> opt2;
  load_network(path.string(), loaded, &opt2);
  REQUIRE(opt2.step_count == 42);
  REQUIRE(loaded.conv_params[0].weight.data == net.conv_params[0].weight.data);
  REQUIRE(opt2.velocity.size() == params.size());
  REQUIRE(opt2.velocity[0][0] == 0.25f);

  // Wrong architecture must be rejected.
  std::vector<LayerSpec> other{conv_spec(5, 4, kPadSame, 4)};
  Network<float> mismatched = make_network<float>(other, 3, 1);
  REQUIRE_THROWS_AS(load_network(path.string(), mismatched), ConfigError);
  std::filesystem::remove(path);
}

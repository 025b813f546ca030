#include <doctest.h>

#include <cmath>
#include <memory>

#include "dmflow/error.hpp"
#include "dmflow/gradcheck.hpp"
#include "dmflow/rf.hpp"
#include "test_util.hpp"

using namespace dmflow;
using testutil::random_tensor;

namespace {

RfConfig toy_config() {
    RfConfig cfg;
    cfg.blocks = 1;
    cfg.model_dim = 16;
    cfg.heads = 2;
    cfg.z_channels = 6;
    cfg.cond_channels = 4;
    cfg.d_vid = 8;
    cfg.video_tokens = 4;
    cfg.ffn_mult = 2;
    return cfg;
}

struct RfFixture {
    RfConfig cfg;
    ParamStore store;
    std::unique_ptr<RfModel> model;

    explicit RfFixture(const RfConfig& c, uint64_t seed = 1) : cfg(c) {
        Rng rng(seed);
        model = std::make_unique<RfModel>(cfg, store, rng);
    }

    void randomize(uint64_t seed) {
        Rng rng(seed);
        for (Parameter* p : store.all()) {
            for (int64_t i = 0; i < p->value.size(); ++i) p->value[i] = 0.3 * rng.gauss();
        }
    }
};

// reference loops
Tensor mm(const Tensor& a, const Tensor& b) {
    Tensor c({a.rows(), b.cols()});
    for (int64_t i = 0; i < a.rows(); ++i) {
        for (int64_t j = 0; j < b.cols(); ++j) {
            double s = 0.0;
            for (int64_t k = 0; k < a.cols(); ++k) s += a(i, k) * b(k, j);
            c(i, j) = s;
        }
    }
    return c;
}

Tensor linear_ref(const Tensor& x, const Linear& lin) {
    Tensor y = mm(x, lin.w->value);
    if (lin.b != nullptr) {
        for (int64_t i = 0; i < y.rows(); ++i) {
            for (int64_t j = 0; j < y.cols(); ++j) y(i, j) += lin.b->value[j];
        }
    }
    return y;
}

Linear find_linear(ParamStore& store, const std::string& name) {
    Linear l;
    l.w = store.find(name + ".w");
    l.b = store.find(name + ".b");
    REQUIRE(l.w != nullptr);
    return l;
}

Tensor layer_norm_ref(const Tensor& x, double eps) {
    Tensor y = x;
    for (int64_t i = 0; i < x.rows(); ++i) {
        double mean = 0.0;
        for (int64_t j = 0; j < x.cols(); ++j) mean += x(i, j);
        mean /= static_cast<double>(x.cols());
        double var = 0.0;
        for (int64_t j = 0; j < x.cols(); ++j) {
            var += (x(i, j) - mean) * (x(i, j) - mean);
        }
        var /= static_cast<double>(x.cols());
        for (int64_t j = 0; j < x.cols(); ++j) {
            y(i, j) = (x(i, j) - mean) / std::sqrt(var + eps);
        }
    }
    return y;
}

Tensor silu_ref(Tensor x) {
    for (int64_t i = 0; i < x.size(); ++i) x[i] = x[i] / (1.0 + std::exp(-x[i]));
    return x;
}

Tensor softmax_ref(Tensor logits) {
    for (int64_t i = 0; i < logits.rows(); ++i) {
        double m = -1e300;
        for (int64_t j = 0; j < logits.cols(); ++j) m = std::max(m, logits(i, j));
        double s = 0.0;
        for (int64_t j = 0; j < logits.cols(); ++j) {
            logits(i, j) = std::exp(logits(i, j) - m);
            s += logits(i, j);
        }
        for (int64_t j = 0; j < logits.cols(); ++j) logits(i, j) /= s;
    }
    return logits;
}

Tensor mha_ref(const Tensor& q, const Tensor& k, const Tensor& v, int heads) {
    const int64_t d = q.cols(), dk = d / heads;
    Tensor out({q.rows(), d});
    for (int h = 0; h < heads; ++h) {
        Tensor logits({q.rows(), k.rows()});
        for (int64_t i = 0; i < q.rows(); ++i) {
            for (int64_t j = 0; j < k.rows(); ++j) {
                double s = 0.0;
                for (int64_t c = 0; c < dk; ++c) s += q(i, h * dk + c) * k(j, h * dk + c);
                logits(i, j) = s / std::sqrt(static_cast<double>(dk));
            }
        }
        Tensor a = softmax_ref(std::move(logits));
        for (int64_t i = 0; i < q.rows(); ++i) {
            for (int64_t c = 0; c < dk; ++c) {
                double s = 0.0;
                for (int64_t j = 0; j < k.rows(); ++j) s += a(i, j) * v(j, h * dk + c);
                out(i, h * dk + c) = s;
            }
        }
    }
    return out;
}

Tensor concat_ref(const Tensor& a, const Tensor& b) {
    Tensor c({a.rows(), a.cols() + b.cols()});
    for (int64_t i = 0; i < a.rows(); ++i) {
        for (int64_t j = 0; j < a.cols(); ++j) c(i, j) = a(i, j);
        for (int64_t j = 0; j < b.cols(); ++j) c(i, a.cols() + j) = b(i, j);
    }
    return c;
}

} // namespace

TEST_SUITE("rf") {

TEST_CASE("interpolation endpoints are exact") {
    const Tensor z = random_tensor({3, 6}, 1);
    const Tensor e = random_tensor({3, 6}, 2);
    CHECK(interpolate_state(z, e, 0.0) == e);
    CHECK(interpolate_state(z, e, 1.0) == z);
    Tensor mid = interpolate_state(Tensor::full({1, 1}, 2.0), Tensor({1, 1}), 0.5);
    CHECK(mid[0] == 1.0);
    CHECK_THROWS_AS((void)interpolate_state(z, e, 1.5), Error);
}

TEST_CASE("cfg velocity specials and blend") {
    const Tensor vc = random_tensor({2, 4}, 3);
    const Tensor vu = random_tensor({2, 4}, 4);
    CHECK(cfg_velocity(vc, vu, 1.0) == vc);  // bitwise
    CHECK(cfg_velocity(vc, vu, 0.0) == vu);
    CHECK(testutil::max_abs_diff(cfg_velocity(vc, vc, 3.7), vc) == 0.0);
    Tensor blend = cfg_velocity(vc, vu, 2.0);
    for (int64_t i = 0; i < blend.size(); ++i) {
        CHECK(blend[i] == doctest::Approx(vu[i] + 2.0 * (vc[i] - vu[i])).epsilon(1e-15));
    }
}

TEST_CASE("time embedding is deterministic and separates timesteps") {
    RfFixture f(toy_config());
    const Tensor a = f.model->time_embedding(0.0);
    const Tensor b = f.model->time_embedding(0.5);
    const Tensor c = f.model->time_embedding(1.0);
    CHECK(a == f.model->time_embedding(0.0));
    CHECK(testutil::max_abs_diff(a, b) > 1e-3);
    CHECK(testutil::max_abs_diff(b, c) > 1e-3);
    CHECK(testutil::max_abs_diff(a, c) > 1e-3);
}

TEST_CASE("untrained model reduces to head(input projection): AdaLN-Zero identity") {
    RfConfig cfg = toy_config();
    cfg.blocks = 4;
    RfFixture f(cfg, 9);
    const Tensor z_t = random_tensor({3, cfg.z_channels}, 10);
    const Tensor x_cond = random_tensor({3, cfg.cond_channels}, 11);
    const Tensor f_vid = random_tensor({cfg.video_tokens, cfg.d_vid}, 12);

    Graph g;
    NodeId v = f.model->velocity(g, g.constant(z_t), g.constant(x_cond), 0.3, g.constant(f_vid),
                                 false);
    Tensor expect = linear_ref(concat_ref(z_t, x_cond), find_linear(f.store, "rf.in_proj"));
    expect = linear_ref(expect, find_linear(f.store, "rf.head"));
    CHECK(testutil::max_abs_diff(g.val(v), expect) < 1e-12);
    CHECK(g.val(v).rows() == 3);
    CHECK(g.val(v).cols() == cfg.z_channels);
}

TEST_CASE("gate parameters start at exactly zero for any timestep") {
    RfConfig cfg = toy_config();
    RfFixture f(cfg, 13);
    Linear adaln = find_linear(f.store, "rf.block0.adaln");
    const int64_t d = cfg.model_dim;
    for (int chunk : {2, 5, 8}) {
        for (int64_t i = 0; i < d; ++i) {
            CHECK(adaln.b->value[chunk * d + i] == 0.0);
            for (int64_t r = 0; r < d; ++r) {
                CHECK(adaln.w->value(r, chunk * d + i) == 0.0);
            }
        }
    }
}

TEST_CASE("single-token velocity matches a hand-rolled composition of the sublayers") {
    RfConfig cfg = toy_config();
    RfFixture f(cfg, 21);
    f.randomize(22);  // non-zero gates so every sublayer contributes
    const double t = 0.37;
    const Tensor z_t = random_tensor({1, cfg.z_channels}, 23);
    const Tensor x_cond = random_tensor({1, cfg.cond_channels}, 24);
    const Tensor f_vid = random_tensor({cfg.video_tokens, cfg.d_vid}, 25);

    Graph g;
    NodeId v = f.model->velocity(g, g.constant(z_t), g.constant(x_cond), t, g.constant(f_vid),
                                 false);

    // reference composition
    const double eps = 1e-5;
    const int heads = static_cast<int>(cfg.heads);
    const int64_t d = cfg.model_dim;
    Tensor x = linear_ref(concat_ref(z_t, x_cond), find_linear(f.store, "rf.in_proj"));
    Tensor t_feat = linear_ref(silu_ref(linear_ref(f.model->time_embedding(t),
                                                   find_linear(f.store, "rf.time.mlp1"))),
                               find_linear(f.store, "rf.time.mlp2"));
    Tensor mods = linear_ref(silu_ref(t_feat), find_linear(f.store, "rf.block0.adaln"));
    auto chunk = [&](int i) {
        Tensor c({1, d});
        for (int64_t j = 0; j < d; ++j) c(0, j) = mods(0, i * d + j);
        return c;
    };
    auto modulate = [&](const Tensor& h, const Tensor& alpha, const Tensor& beta) {
        Tensor y = h;
        for (int64_t i = 0; i < h.rows(); ++i) {
            for (int64_t j = 0; j < d; ++j) y(i, j) = h(i, j) * (1.0 + alpha(0, j)) + beta(0, j);
        }
        return y;
    };
    auto gate_add = [&](Tensor& base, const Tensor& delta, const Tensor& gamma) {
        for (int64_t i = 0; i < base.rows(); ++i) {
            for (int64_t j = 0; j < d; ++j) base(i, j) += gamma(0, j) * delta(i, j);
        }
    };
    {
        Tensor h = modulate(layer_norm_ref(x, eps), chunk(0), chunk(1));
        Tensor attn = mha_ref(linear_ref(h, find_linear(f.store, "rf.block0.cross.q")),
                              linear_ref(f_vid, find_linear(f.store, "rf.block0.cross.k")),
                              linear_ref(f_vid, find_linear(f.store, "rf.block0.cross.v")), heads);
        gate_add(x, linear_ref(attn, find_linear(f.store, "rf.block0.cross.o")), chunk(2));
    }
    {
        Tensor h = modulate(layer_norm_ref(x, eps), chunk(3), chunk(4));
        Tensor attn = mha_ref(linear_ref(h, find_linear(f.store, "rf.block0.self.q")),
                              linear_ref(h, find_linear(f.store, "rf.block0.self.k")),
                              linear_ref(h, find_linear(f.store, "rf.block0.self.v")), heads);
        gate_add(x, linear_ref(attn, find_linear(f.store, "rf.block0.self.o")), chunk(5));
    }
    {
        Tensor h = modulate(layer_norm_ref(x, eps), chunk(6), chunk(7));
        Tensor ff = linear_ref(silu_ref(linear_ref(h, find_linear(f.store, "rf.block0.ffn.1"))),
                               find_linear(f.store, "rf.block0.ffn.2"));
        gate_add(x, ff, chunk(8));
    }
    Tensor expect = linear_ref(x, find_linear(f.store, "rf.head"));
    CHECK(testutil::max_abs_diff(g.val(v), expect) < 1e-11);
}

TEST_CASE("dropped conditioning makes the velocity independent of the video") {
    RfFixture f(toy_config(), 30);
    f.randomize(31);
    const Tensor z_t = random_tensor({2, f.cfg.z_channels}, 32);
    const Tensor x_cond = random_tensor({2, f.cfg.cond_channels}, 33);
    const Tensor vid_a = random_tensor({f.cfg.video_tokens, f.cfg.d_vid}, 34);
    const Tensor vid_b = random_tensor({f.cfg.video_tokens, f.cfg.d_vid}, 35);

    auto eval = [&](const Tensor& vid, bool drop) {
        Graph g;
        NodeId v = f.model->velocity(g, g.constant(z_t), g.constant(x_cond), 0.5,
                                     g.constant(vid), drop);
        return g.val(v);
    };
    CHECK(eval(vid_a, true) == eval(vid_b, true));        // null tokens attended instead
    CHECK(testutil::max_abs_diff(eval(vid_a, false), eval(vid_b, false)) > 1e-9);
}

TEST_CASE("flow loss of the zero model equals mean squared target") {
    RfFixture f(toy_config(), 40);
    // zero the head so the velocity is exactly zero
    Linear head = find_linear(f.store, "rf.head");
    head.w->value.fill(0.0);
    head.b->value.fill(0.0);

    const Tensor z = random_tensor({3, f.cfg.z_channels}, 41);
    const Tensor eps = random_tensor({3, f.cfg.z_channels}, 42);
    const Tensor x_cond = random_tensor({3, f.cfg.cond_channels}, 43);
    const Tensor vid = random_tensor({f.cfg.video_tokens, f.cfg.d_vid}, 44);

    Graph g;
    auto fl = f.model->flow_loss(g, z, x_cond, g.constant(vid), false, 0.25, eps);
    double direct = 0.0;
    for (int64_t i = 0; i < z.size(); ++i) {
        direct += (z[i] - eps[i]) * (z[i] - eps[i]);
    }
    direct /= static_cast<double>(z.size());
    CHECK(g.scalar(fl.loss) == doctest::Approx(direct).epsilon(1e-14));

    // matches the standalone objective evaluation as well
    CHECK(RfModel::flow_loss_value(Tensor(z.shape()), z, eps) ==
          doctest::Approx(direct).epsilon(1e-14));
    // analytic oracle velocity zeroes the objective
    Tensor oracle = z;
    oracle.axpy_(-1.0, eps);
    CHECK(RfModel::flow_loss_value(oracle, z, eps) == 0.0);
}

TEST_CASE("euler: one step under the oracle field reaches the data exactly") {
    // dyadic values keep the arithmetic exact, so the check is bitwise
    Rng rng(50);
    Tensor z_dyn({2, 4}), eps({2, 4});
    for (int64_t i = 0; i < z_dyn.size(); ++i) {
        z_dyn[i] = static_cast<double>(rng.uniform_int(257) - 128) / 64.0;
        eps[i] = static_cast<double>(rng.uniform_int(257) - 128) / 64.0;
    }
    Tensor target_minus_eps = z_dyn;
    target_minus_eps.axpy_(-1.0, eps);
    auto oracle = [&](const Tensor&, double) { return target_minus_eps; };
    Tensor out = euler_sample(eps, oracle, 1);
    CHECK(out == z_dyn);
}

TEST_CASE("euler error shrinks when steps double on a curved field") {
    // v(z, t) = -z has the exact solution z0 * exp(-1) at t = 1
    const Tensor z0 = random_tensor({1, 3}, 60);
    auto field = [](const Tensor& z, double) {
        Tensor v = z;
        v.scale_(-1.0);
        return v;
    };
    auto error_at = [&](int64_t steps) {
        Tensor z = euler_sample(z0, field, steps);
        double err = 0.0;
        for (int64_t i = 0; i < z.size(); ++i) {
            err = std::max(err, std::abs(z[i] - z0[i] * std::exp(-1.0)));
        }
        return err;
    };
    CHECK(error_at(32) < error_at(16));
    CHECK(error_at(16) < error_at(8));
}

TEST_CASE("sampling is bitwise reproducible from a seed") {
    RfFixture f(toy_config(), 70);
    f.randomize(71);
    const Tensor x_cond = random_tensor({3, f.cfg.cond_channels}, 72);
    const Tensor vid = random_tensor({f.cfg.video_tokens, f.cfg.d_vid}, 73);
    Rng r1(99), r2(99), r3(100);
    const Tensor a = f.model->sample(x_cond, vid, 4, 2.0, r1);
    const Tensor b = f.model->sample(x_cond, vid, 4, 2.0, r2);
    const Tensor c = f.model->sample(x_cond, vid, 4, 2.0, r3);
    CHECK(a == b);
    CHECK(testutil::max_abs_diff(a, c) > 1e-9);
    CHECK(a.rows() == 3);
    CHECK(a.cols() == f.cfg.z_channels);
}

TEST_CASE("toy velocity passes gradient checks") {
    RfFixture f(toy_config(), 80);
    f.randomize(81);
    const Tensor z = random_tensor({2, f.cfg.z_channels}, 82);
    const Tensor eps = random_tensor({2, f.cfg.z_channels}, 83);
    const Tensor x_cond = random_tensor({2, f.cfg.cond_channels}, 84);
    const Tensor vid = random_tensor({f.cfg.video_tokens, f.cfg.d_vid}, 85);

    auto loss_fn = [&](bool grads) {
        Graph g;
        auto fl = f.model->flow_loss(g, z, x_cond, g.constant(vid), false, 0.6, eps);
        if (grads) g.backward(fl.loss);
        return g.scalar(fl.loss);
    };
    auto params = f.store.all();
    CHECK(check_gradients(loss_fn, params, 1e-5, 3) < 1e-3);
}

TEST_CASE("velocity validates token and channel shapes") {
    RfFixture f(toy_config(), 90);
    Graph g;
    NodeId z = g.constant(random_tensor({2, f.cfg.z_channels}, 91));
    NodeId x_bad = g.constant(random_tensor({3, f.cfg.cond_channels}, 92));
    NodeId vid = g.constant(random_tensor({f.cfg.video_tokens, f.cfg.d_vid}, 93));
    CHECK_THROWS_AS((void)f.model->velocity(g, z, x_bad, 0.5, vid, false), Error);
}

} // TEST_SUITE

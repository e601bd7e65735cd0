#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "optim.hpp"
#include "tape.hpp"
#include "tensor.hpp"

using namespace mrckg;

TEST_CASE("smooth_l1 arms") {
    Tape t;
    Val a = t.input(Tensor::scalar(0.5));
    Val b = t.constant(Tensor::scalar(0.0));
    CHECK(t.value(t.smooth_l1(a, b, 1.0)).item() == doctest::Approx(0.125));

    Val c = t.input(Tensor::scalar(2.0));
    CHECK(t.value(t.smooth_l1(c, b, 1.0)).item() == doctest::Approx(1.5));

    Val d = t.input(Tensor::vector({1.0, -2.0, 3.0}));
    Val e = t.input(Tensor::vector({1.0, -2.0, 3.0}));
    CHECK(t.value(t.smooth_l1(d, e, 1.0)).item() == 0.0);

    // one relation shifted by 0.5 per coordinate -> mean 0.125
    Val f = t.input(Tensor::vector({0.5, 0.5, 0.5, 0.5}));
    Val g = t.constant(Tensor::vector({0.0, 0.0, 0.0, 0.0}));
    CHECK(t.value(t.smooth_l1(f, g, 1.0)).item() == doctest::Approx(0.125));

    Val h = t.input(Tensor::vector({1.0, 2.0}));
    CHECK_THROWS_AS(t.smooth_l1(h, b, 1.0), Fault);
    CHECK_THROWS_AS(t.smooth_l1(a, b, 0.0), Fault);
}

TEST_CASE("cosine values and degenerate guard") {
    Tape t;
    Val u = t.input(Tensor::vector({2.0, 1.0, -1.0}));
    CHECK(t.value(t.cosine(u, u)).item() == doctest::Approx(1.0));

    Val x = t.input(Tensor::vector({1.0, 0.0}));
    Val y = t.input(Tensor::vector({0.0, 1.0}));
    CHECK(t.value(t.cosine(x, y)).item() == doctest::Approx(0.0));

    Val p = t.input(Tensor::vector({1.0, 1.0}));
    CHECK(t.value(t.cosine(p, x)).item() == doctest::Approx(0.70710678).epsilon(1e-6));

    Val z = t.input(Tensor::vector({0.0, 0.0}));
    CHECK(t.value(t.cosine(z, x)).item() == 0.0);
}

TEST_CASE("softmax cross entropy") {
    Tape t;
    Val uniform = t.input(Tensor::vector({0.3, 0.3, 0.3, 0.3}));
    CHECK(t.value(t.softmax_cross_entropy(uniform, 2)).item() ==
          doctest::Approx(std::log(4.0)));

    Val hot = t.input(Tensor::vector({1000.0, 0.0, 0.0}));
    CHECK(t.value(t.softmax_cross_entropy(hot, 0)).item() == doctest::Approx(0.0).epsilon(1e-9));

    Val two = t.input(Tensor::vector({1.0, 0.0}));
    CHECK(t.value(t.softmax_cross_entropy(two, 0)).item() ==
          doctest::Approx(0.31326168751822286));

    CHECK_THROWS_AS(t.softmax_cross_entropy(two, 5), Fault);
}

TEST_CASE("backward basics and stop_grad") {
    {
        Tape t;
        Val x = t.input(Tensor::vector({3.0}));
        Val y = t.dot(x, x);  // x^2
        t.backward(y);
        CHECK(t.grad(x).at(0) == doctest::Approx(6.0));
    }
    {
        // f(x) = sg(x) * x -> grad == x, not 2x
        Tape t;
        Val x = t.input(Tensor::vector({3.0}));
        Val y = t.dot(t.stop_grad(x), x);
        t.backward(y);
        CHECK(t.grad(x).at(0) == doctest::Approx(3.0));
    }
    {
        Tape t;
        Val x = t.input(Tensor::vector({1.0, 2.0}));
        CHECK_THROWS_AS(t.backward(x), Fault);
    }
}

static Tensor fd_grad(const std::function<double(const Tensor&)>& f, const Tensor& x0,
                      double eps = 1e-6) {
    Tensor g = Tensor::zeros(x0.shape());
    Tensor x = x0;
    for (size_t i = 0; i < x.size(); ++i) {
        const double orig = x.data()[i];
        x.data()[i] = orig + eps;
        const double lp = f(x);
        x.data()[i] = orig - eps;
        const double lm = f(x);
        x.data()[i] = orig;
        g.data()[i] = (lp - lm) / (2 * eps);
    }
    return g;
}

TEST_CASE("tape ops agree with central differences") {
    const Tensor x0 = Tensor::matrix(3, 4, {0.1, -0.4, 0.9, 0.3, -0.2, 0.5, 0.7, -0.8, 0.4, 0.2,
                                            -0.6, 0.1});
    auto scalar_of = [](Tape& t, Val m) {
        // squash matrix/vector to scalar via smooth_l1 against zeros
        return t.smooth_l1(m, t.constant(Tensor::zeros(t.value(m).shape())), 0.7);
    };

    SUBCASE("layer_norm") {
        auto f = [&](const Tensor& x) {
            Tape t;
            Val v = t.input(x);
            Val g = t.input(Tensor::vector({1.1, 0.9, 1.2, 0.8}));
            Val b = t.input(Tensor::vector({0.0, 0.1, -0.1, 0.2}));
            return t.value(scalar_of(t, t.layer_norm(v, g, b))).item();
        };
        Tape t;
        Val v = t.input(x0);
        Val g = t.input(Tensor::vector({1.1, 0.9, 1.2, 0.8}));
        Val b = t.input(Tensor::vector({0.0, 0.1, -0.1, 0.2}));
        t.backward(scalar_of(t, t.layer_norm(v, g, b)));
        Tensor num = fd_grad(f, x0);
        for (size_t i = 0; i < num.size(); ++i)
            CHECK(t.grad(v).data()[i] == doctest::Approx(num.data()[i]).epsilon(1e-5));
    }
    SUBCASE("gelu softmax matmul chain") {
        const Tensor w0 = Tensor::matrix(4, 3, {0.3, -0.1, 0.2, 0.5, 0.4, -0.3, 0.1, 0.2, 0.6,
                                                -0.2, 0.3, 0.1});
        auto build = [&](Tape& t, Val xv, Val wv) {
            return scalar_of(t, t.softmax_rows(t.gelu(t.matmul(xv, wv))));
        };
        Tape t;
        Val xv = t.input(x0);
        Val wv = t.input(w0);
        t.backward(build(t, xv, wv));
        auto fx = [&](const Tensor& x) {
            Tape tt;
            Val a = tt.input(x);
            Val b = tt.input(w0);
            return tt.value(build(tt, a, b)).item();
        };
        Tensor num = fd_grad(fx, x0);
        for (size_t i = 0; i < num.size(); ++i)
            CHECK(t.grad(xv).data()[i] == doctest::Approx(num.data()[i]).epsilon(1e-4));
        auto fw = [&](const Tensor& w) {
            Tape tt;
            Val a = tt.input(x0);
            Val b = tt.input(w);
            return tt.value(build(tt, a, b)).item();
        };
        Tensor numw = fd_grad(fw, w0);
        for (size_t i = 0; i < numw.size(); ++i)
            CHECK(t.grad(wv).data()[i] == doctest::Approx(numw.data()[i]).epsilon(1e-4));
    }
    SUBCASE("tucker tail and head") {
        const Tensor core = Tensor::gaussian({3, 3, 3}, 0.5, 7);
        const Tensor h0 = Tensor::vector({0.4, -0.2, 0.9});
        const Tensor r0 = Tensor::vector({-0.5, 0.3, 0.7});
        auto build_t = [&](Tape& t, Val c, Val h, Val r) {
            return t.dot(t.tucker_query_tail(c, h, r), t.constant(Tensor::vector({1.0, 2.0, -1.0})));
        };
        Tape t;
        Val c = t.input(core);
        Val h = t.input(h0);
        Val r = t.input(r0);
        t.backward(build_t(t, c, h, r));
        auto fc = [&](const Tensor& cc) {
            Tape tt;
            return tt.value(build_t(tt, tt.input(cc), tt.input(h0), tt.input(r0))).item();
        };
        Tensor num = fd_grad(fc, core);
        for (size_t i = 0; i < num.size(); ++i)
            CHECK(t.grad(c).data()[i] == doctest::Approx(num.data()[i]).epsilon(1e-5));
        auto fh = [&](const Tensor& hh) {
            Tape tt;
            return tt.value(build_t(tt, tt.input(core), tt.input(hh), tt.input(r0))).item();
        };
        Tensor numh = fd_grad(fh, h0);
        for (size_t i = 0; i < numh.size(); ++i)
            CHECK(t.grad(h).data()[i] == doctest::Approx(numh.data()[i]).epsilon(1e-5));

        // d=1 degenerate trilinear: W=2, h=3, r=0.5, t=1 -> 3.0
        Tape t1;
        Tensor w1 = Tensor::zeros({1, 1, 1});
        w1.data()[0] = 2.0;
        Val q = t1.tucker_query_tail(t1.input(w1), t1.input(Tensor::vector({3.0})),
                                     t1.input(Tensor::vector({0.5})));
        CHECK(t1.value(t1.dot(q, t1.constant(Tensor::vector({1.0})))).item() ==
              doctest::Approx(3.0));
    }
    SUBCASE("cosine gradient") {
        const Tensor u0 = Tensor::vector({0.5, -0.3, 0.8});
        const Tensor v0 = Tensor::vector({-0.1, 0.9, 0.4});
        Tape t;
        Val u = t.input(u0);
        Val v = t.input(v0);
        t.backward(t.cosine(u, v));
        auto fu = [&](const Tensor& uu) {
            Tape tt;
            return tt.value(tt.cosine(tt.input(uu), tt.input(v0))).item();
        };
        Tensor num = fd_grad(fu, u0);
        for (size_t i = 0; i < num.size(); ++i)
            CHECK(t.grad(u).data()[i] == doctest::Approx(num.data()[i]).epsilon(1e-5));
    }
    SUBCASE("weighted smooth l1 rows and sq_diff_sum") {
        const Tensor ref = Tensor::matrix(3, 4, std::vector<double>(12, 0.05));
        auto build = [&](Tape& t, Val m) {
            Val a = t.weighted_smooth_l1_rows(m, t.constant(ref), {0.5, 2.0, 1.0}, 1.0);
            Val b = t.sq_diff_sum(m, t.constant(ref));
            return t.add(a, b);
        };
        Tape t;
        Val m = t.input(x0);
        t.backward(build(t, m));
        auto f = [&](const Tensor& x) {
            Tape tt;
            Val mm = tt.input(x);
            return tt.value(build(tt, mm)).item();
        };
        Tensor num = fd_grad(f, x0);
        for (size_t i = 0; i < num.size(); ++i)
            CHECK(t.grad(m).data()[i] == doctest::Approx(num.data()[i]).epsilon(1e-5));
    }
    SUBCASE("l2_normalize and gather ops") {
        auto build = [&](Tape& t, Val m) {
            Val r = t.l2_normalize(t.row(m, 1));
            Val g = t.rows(m, {2, 0});
            Val mr = t.mean_rows(g);
            return t.add(t.dot(r, mr), t.dot(t.row(t.cols(m, 1, 3), 0),
                                             t.constant(Tensor::vector({1.0, -2.0}))));
        };
        Tape t;
        Val m = t.input(x0);
        t.backward(build(t, m));
        auto f = [&](const Tensor& x) {
            Tape tt;
            Val mm = tt.input(x);
            return tt.value(build(tt, mm)).item();
        };
        Tensor num = fd_grad(f, x0);
        for (size_t i = 0; i < num.size(); ++i)
            CHECK(t.grad(m).data()[i] == doctest::Approx(num.data()[i]).epsilon(1e-5));
    }
}

TEST_CASE("grad_check on simple functions") {
    ParamStore ps;
    ps.put("w", Tensor::vector({0.7, -1.2, 0.4}));

    SUBCASE("quadratic form") {
        auto fn = [](Tape& t, const ParamRefs& refs) {
            Val w = refs.at("w");
            return t.dot(w, w);
        };
        CHECK(grad_check(fn, ps, 1e-5, 3, 42) < 1e-7);
    }
    SUBCASE("constant function") {
        auto fn = [](Tape& t, const ParamRefs&) { return t.constant(Tensor::scalar(2.5)); };
        CHECK(grad_check(fn, ps, 1e-5, 3, 42) == 0.0);
    }
}

TEST_CASE("adam step behavior") {
    AdamConfig cfg;
    cfg.lr = 0.1;

    SUBCASE("zero grads leave params unchanged") {
        ParamStore ps;
        ps.put("w", Tensor::vector({1.0, 2.0}));
        Adam opt;
        GradMap g{{"w", Tensor::zeros({2})}};
        opt.step(ps, g, {}, cfg);
        CHECK(ps.at("w").at(0) == 1.0);
        CHECK(ps.at("w").at(1) == 2.0);
    }
    SUBCASE("fully masked rows unchanged despite gradients") {
        ParamStore ps;
        ps.put("w", Tensor::matrix(2, 2, {1.0, 2.0, 3.0, 4.0}));
        Adam opt;
        GradMap g{{"w", Tensor::matrix(2, 2, {5.0, 5.0, 5.0, 5.0})}};
        FreezeMask mask;
        mask.rows["w"] = {1, 1};
        opt.step(ps, g, mask, cfg);
        CHECK(ps.at("w") == Tensor::matrix(2, 2, {1.0, 2.0, 3.0, 4.0}));
    }
    SUBCASE("single scalar first step moves by about lr") {
        ParamStore ps;
        ps.put("w", Tensor::vector({0.5}));
        Adam opt;
        GradMap g{{"w", Tensor::vector({1.0})}};
        opt.step(ps, g, {}, cfg);
        CHECK(ps.at("w").at(0) == doctest::Approx(0.4).epsilon(1e-6));
    }
    SUBCASE("non-finite gradient faults with parameter name") {
        ParamStore ps;
        ps.put("bad_param", Tensor::vector({0.5}));
        Adam opt;
        GradMap g{{"bad_param", Tensor::vector({1.0})}};
        g.at("bad_param").data()[0] = std::numeric_limits<double>::quiet_NaN();
        try {
            opt.step(ps, g, {}, cfg);
            CHECK(false);
        } catch (const Fault& f) {
            CHECK(std::string(f.what()).find("bad_param") != std::string::npos);
        }
    }
}

TEST_CASE("determinism: identical inputs give bit-identical results") {
    auto run = [] {
        Tape t;
        Val a = t.input(Tensor::gaussian({4, 4}, 1.0, 99));
        Val b = t.input(Tensor::gaussian({4, 4}, 1.0, 123));
        Val l = t.smooth_l1(t.softmax_rows(t.matmul(a, b)), t.constant(Tensor::zeros({4, 4})), 1.0);
        t.backward(l);
        return std::make_pair(t.value(l).item(), t.grad(a));
    };
    auto [l1, g1] = run();
    auto [l2, g2] = run();
    CHECK(l1 == l2);
    CHECK(g1 == g2);
}

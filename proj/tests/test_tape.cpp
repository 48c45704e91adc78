#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "felab/nn.hpp"
#include "felab/optimizer.hpp"
#include "felab/tape.hpp"
#include "test_util.hpp"

using namespace felab;

namespace {

Tensor tensor2(int rows, int cols, std::vector<double> vals) {
    Tensor t({rows, cols});
    t.values = std::move(vals);
    return t;
}

Tensor random_tensor(std::vector<int> shape, Rng& rng, double scale = 1.0) {
    Tensor t(std::move(shape));
    for (double& v : t.values) v = rng.normal(0.0, scale);
    return t;
}

}  // namespace

TEST_CASE("selu values") {
    Tape tape;
    Tensor x = tensor2(1, 3, {0.0, 1.0, -1e9});
    int id = tape.selu(tape.constant(x));
    const auto& y = tape.value(id).values;
    CHECK(y[0] == 0.0);
    CHECK(y[1] == doctest::Approx(1.0507009873554805).epsilon(1e-15));
    CHECK(y[2] == doctest::Approx(-1.7580993408473766).epsilon(1e-12));  // saturation -lambda*alpha
}

TEST_CASE("dropout contract") {
    Rng rng(7);
    Tensor x = random_tensor({100, 10}, rng);

    SUBCASE("ratio 0 is identity") {
        Tape tape;
        int in = tape.constant(x);
        CHECK(tape.dropout(in, 0.0, true, &rng) == in);
    }
    SUBCASE("eval mode is identity") {
        Tape tape;
        int in = tape.constant(x);
        CHECK(tape.dropout(in, 0.2, false, nullptr) == in);
    }
    SUBCASE("empirical zero fraction and survivor scaling") {
        Tensor big({1000, 100}, 1.0);
        Tape tape;
        int id = tape.dropout(tape.constant(big), 0.2, true, &rng);
        const auto& y = tape.value(id).values;
        long zeros = 0;
        for (double v : y) {
            if (v == 0.0)
                ++zeros;
            else
                CHECK(v == doctest::Approx(1.0 / 0.8).epsilon(1e-12));
        }
        CHECK(static_cast<double>(zeros) / y.size() == doctest::Approx(0.2).epsilon(0.05));
        CHECK(std::fabs(static_cast<double>(zeros) / y.size() - 0.2) < 0.01);
    }
    SUBCASE("invalid ratio") {
        Tape tape;
        int in = tape.constant(x);
        CHECK_THROWS_AS(tape.dropout(in, 1.0, true, &rng), ConfigError);
        CHECK_THROWS_AS(tape.dropout(in, -0.1, true, &rng), ConfigError);
    }
}

TEST_CASE("mse values") {
    Tape tape;
    int a = tape.constant(tensor2(1, 2, {1.0, 1.0}));
    int b = tape.constant(tensor2(1, 2, {0.0, 0.0}));
    CHECK(tape.scalar(tape.mse(a, a)) == 0.0);
    CHECK(tape.scalar(tape.mse(a, b)) == doctest::Approx(1.0));
    int c = tape.constant(tensor2(1, 2, {3.0, 0.0}));
    int d = tape.constant(tensor2(1, 2, {0.0, 4.0}));
    CHECK(tape.scalar(tape.mse(c, d)) == doctest::Approx(12.5));
    int e = tape.constant(tensor2(1, 3, {0.0, 0.0, 0.0}));
    CHECK_THROWS_AS(tape.mse(a, e), ShapeError);
}

TEST_CASE("gaussian kl values") {
    Tape tape;
    int mu0 = tape.constant(tensor2(1, 1, {0.0}));
    int sig1 = tape.constant(tensor2(1, 1, {1.0}));
    CHECK(tape.scalar(tape.gaussian_kl(mu0, sig1)) == doctest::Approx(0.0));

    int mu1 = tape.constant(tensor2(1, 1, {1.0}));
    CHECK(tape.scalar(tape.gaussian_kl(mu1, sig1)) == doctest::Approx(0.5));

    int sig2 = tape.constant(tensor2(1, 1, {2.0}));
    CHECK(tape.scalar(tape.gaussian_kl(mu0, sig2)) ==
          doctest::Approx(0.5 * (4.0 - 1.0 - std::log(4.0))));

    int sig_bad = tape.constant(tensor2(1, 1, {0.0}));
    CHECK_THROWS_AS(tape.gaussian_kl(mu0, sig_bad), ConfigError);
}

TEST_CASE("backward basics") {
    SUBCASE("closed-form scalar gradient") {
        Tensor x = tensor2(1, 1, {3.0});
        x.requires_grad = true;
        Tape tape;
        int loss = tape.mse(tape.leaf(x), tape.constant(tensor2(1, 1, {1.0})));
        tape.backward(loss);
        CHECK(x.grad[0] == doctest::Approx(2.0 * (3.0 - 1.0)));
    }
    SUBCASE("gradients accumulate until zeroed") {
        Tensor x = tensor2(1, 1, {3.0});
        x.requires_grad = true;
        Tape tape;
        int loss = tape.mse(tape.leaf(x), tape.constant(tensor2(1, 1, {1.0})));
        tape.backward(loss);
        const double once = x.grad[0];
        tape.backward(loss);
        CHECK(x.grad[0] == doctest::Approx(2.0 * once).epsilon(1e-15));
        x.zero_grad();
        tape.backward(loss);
        CHECK(x.grad[0] == doctest::Approx(once).epsilon(1e-15));
    }
    SUBCASE("non-scalar loss rejected") {
        Tensor x = tensor2(1, 2, {1.0, 2.0});
        x.requires_grad = true;
        Tape tape;
        int id = tape.leaf(x);
        CHECK_THROWS_AS(tape.backward(id), ConfigError);
    }
    SUBCASE("forward+backward leave inputs unmodified") {
        Rng rng(3);
        Tensor x = random_tensor({4, 5}, rng);
        Tensor w = random_tensor({5, 3}, rng);
        Tensor b = random_tensor({3}, rng);
        w.requires_grad = b.requires_grad = true;
        const auto xs = x.values, ws = w.values, bs = b.values;
        Tape tape;
        int y = tape.selu(tape.affine(tape.constant(x), tape.leaf(w), tape.leaf(b)));
        tape.backward(tape.mean_all(y));
        CHECK(x.values == xs);
        CHECK(w.values == ws);
        CHECK(b.values == bs);
    }
}

TEST_CASE("gradcheck: two-layer selu net against central differences") {
    Rng rng(11);
    for (int trial = 0; trial < 5; ++trial) {
        Tensor x = random_tensor({4, 6}, rng);
        Tensor target = random_tensor({4, 2}, rng);
        Mlp net = Mlp::make({6, 8, 2}, Activation::Selu, rng);
        std::vector<Tensor*> params;
        net.collect(params);

        auto loss_only = [&] {
            Tape tape;
            return tape.scalar(tape.mse(net.forward(tape, tape.constant(x)),
                                        tape.constant(target)));
        };
        auto loss_and_grad = [&] {
            for (Tensor* p : params) p->zero_grad();
            Tape tape;
            int loss = tape.mse(net.forward(tape, tape.constant(x)), tape.constant(target));
            tape.backward(loss);
            return tape.scalar(loss);
        };
        CHECK(test::max_grad_rel_err(params, loss_and_grad, loss_only) < 1e-4);
    }
}

TEST_CASE("gradcheck: every op kind") {
    Rng rng(19);
    Tensor a = random_tensor({3, 4}, rng);
    Tensor b = random_tensor({3, 4}, rng);
    a.requires_grad = b.requires_grad = true;
    std::vector<Tensor*> params{&a, &b};

    auto check = [&](auto build) {
        auto loss_only = [&] {
            Tape tape;
            return tape.scalar(build(tape));
        };
        auto loss_and_grad = [&] {
            a.zero_grad();
            b.zero_grad();
            Tape tape;
            int loss = build(tape);
            tape.backward(loss);
            return tape.scalar(loss);
        };
        CHECK(test::max_grad_rel_err(params, loss_and_grad, loss_only) < 1e-4);
    };

    check([&](Tape& t) { return t.mean_all(t.add(t.leaf(a), t.leaf(b))); });
    check([&](Tape& t) { return t.mean_all(t.sub(t.leaf(a), t.leaf(b))); });
    check([&](Tape& t) { return t.mean_all(t.mul(t.leaf(a), t.leaf(b))); });
    check([&](Tape& t) { return t.mean_all(t.selu(t.leaf(a))); });
    check([&](Tape& t) { return t.mean_all(t.add_scalar(t.leaf(a), 2.5)); });
    check([&](Tape& t) { return t.mean_all(t.scale(t.leaf(a), -1.7)); });
    check([&](Tape& t) { return t.mean_all(t.exp_clamp(t.leaf(a), -6.0, 3.0)); });
    check([&](Tape& t) { return t.mean_all(t.slice_cols(t.leaf(a), 1, 3)); });
    check([&](Tape& t) { return t.mse(t.leaf(a), t.leaf(b)); });
    check([&](Tape& t) {
        // sigma = exp(b) keeps the KL domain valid under FD perturbations
        return t.gaussian_kl(t.leaf(a), t.exp_clamp(t.leaf(b), -6.0, 3.0));
    });
    check([&](Tape& t) {
        Rng mask_rng(123);  // fixed mask across FD evaluations
        return t.mean_all(t.dropout(t.leaf(a), 0.3, true, &mask_rng));
    });

    // affine with its own shapes
    {
        Tensor x = random_tensor({5, 4}, rng);
        Tensor w = random_tensor({4, 3}, rng);
        Tensor bias = random_tensor({3}, rng);
        x.requires_grad = w.requires_grad = bias.requires_grad = true;
        std::vector<Tensor*> ps{&x, &w, &bias};
        auto loss_only = [&] {
            Tape tape;
            return tape.scalar(
                tape.mean_all(tape.affine(tape.leaf(x), tape.leaf(w), tape.leaf(bias))));
        };
        auto loss_and_grad = [&] {
            for (Tensor* p : ps) p->zero_grad();
            Tape tape;
            int loss = tape.mean_all(tape.affine(tape.leaf(x), tape.leaf(w), tape.leaf(bias)));
            tape.backward(loss);
            return tape.scalar(loss);
        };
        CHECK(test::max_grad_rel_err(ps, loss_and_grad, loss_only) < 1e-4);
    }
}

TEST_CASE("restricted backward only touches the target group") {
    Rng rng(5);
    Tensor x = random_tensor({3, 4}, rng);
    Mlp net_a = Mlp::make({4, 5, 2}, Activation::Selu, rng);
    Mlp net_b = Mlp::make({2, 5, 4}, Activation::Selu, rng);
    std::vector<Tensor*> group_a, group_b;
    net_a.collect(group_a);
    net_b.collect(group_b);

    Tape tape;
    int mid = net_a.forward(tape, tape.constant(x));
    int out = net_b.forward(tape, mid);
    int loss = tape.mse(out, tape.constant(x));

    tape.backward(loss, std::span<Tensor* const>(group_b));
    for (Tensor* t : group_a) CHECK(t->grad.empty());
    bool any_nonzero = false;
    for (Tensor* t : group_b)
        for (double g : t->grad) any_nonzero |= (g != 0.0);
    CHECK(any_nonzero);

    // Restricted gradients must equal the full-backward gradients.
    std::vector<std::vector<double>> restricted;
    for (Tensor* t : group_b) restricted.push_back(t->grad);
    for (Tensor* t : group_a) t->zero_grad();
    for (Tensor* t : group_b) t->zero_grad();
    tape.backward(loss);
    for (std::size_t i = 0; i < group_b.size(); ++i) CHECK(group_b[i]->grad == restricted[i]);
}

TEST_CASE("adam update rules") {
    SUBCASE("zero gradient leaves parameters unchanged") {
        Tensor p = tensor2(1, 3, {1.0, -2.0, 0.5});
        p.requires_grad = true;
        p.ensure_grad();
        AdamState st = AdamState::for_tensor(p, 1e-3);
        const auto before = p.values;
        adam_step(p, st);
        CHECK(p.values == before);
        CHECK(st.t == 1);
    }
    SUBCASE("first step with unit gradient moves by about lr") {
        Tensor p = tensor2(1, 1, {0.7});
        p.requires_grad = true;
        p.ensure_grad();
        p.grad[0] = 1.0;
        AdamState st = AdamState::for_tensor(p, 1e-3);
        adam_step(p, st);
        CHECK(p.values[0] == doctest::Approx(0.7 - 1e-3).epsilon(1e-6));
    }
    SUBCASE("repeated constant gradient converges to lr-sized steps") {
        Tensor p = tensor2(1, 1, {0.0});
        p.requires_grad = true;
        AdamState st = AdamState::for_tensor(p, 1e-3);
        double prev = p.values[0];
        double step = 0.0;
        for (int i = 0; i < 300; ++i) {
            p.ensure_grad();
            p.grad[0] = 2.5;
            adam_step(p, st);
            step = prev - p.values[0];
            prev = p.values[0];
            p.zero_grad();
        }
        CHECK(step == doctest::Approx(1e-3).epsilon(1e-3));
    }
    SUBCASE("shape mismatch rejected") {
        Tensor p = tensor2(1, 2, {0.0, 0.0});
        AdamState st = AdamState::for_tensor(p, 1e-3);
        Tensor q = tensor2(1, 3, {0.0, 0.0, 0.0});
        CHECK_THROWS_AS(adam_step(q, st), ShapeError);
    }
}

TEST_CASE("determinism: identical seeds give bit-identical trajectories") {
    auto run = [](std::uint64_t seed) {
        Rng rng(seed);
        Tensor x = random_tensor({8, 6}, rng);
        Mlp net = Mlp::make({6, 8, 6}, Activation::Selu, rng);
        std::vector<Tensor*> params;
        net.collect(params);
        std::vector<AdamState> opt;
        for (Tensor* p : params) opt.push_back(AdamState::for_tensor(*p, 1e-3));
        for (int it = 0; it < 20; ++it) {
            for (Tensor* p : params) p->zero_grad();
            Tape tape;
            int loss = tape.mse(net.forward(tape, tape.constant(x)), tape.constant(x));
            tape.backward(loss);
            for (std::size_t i = 0; i < params.size(); ++i) adam_step(*params[i], opt[i]);
        }
        std::vector<double> flat;
        for (Tensor* p : params) flat.insert(flat.end(), p->values.begin(), p->values.end());
        return flat;
    };
    CHECK(run(42) == run(42));
    CHECK(run(42) != run(43));
}

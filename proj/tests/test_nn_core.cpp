#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/SVD>

#include "fd_check.hpp"
#include "loginv/nn/batchnorm.hpp"
#include "loginv/nn/init.hpp"
#include "loginv/nn/layers.hpp"
#include "loginv/nn/ops.hpp"
#include "loginv/nn/optim.hpp"
#include "loginv/nn/spectral_norm.hpp"
#include "loginv/rng.hpp"

using namespace loginv;

TEST_CASE("conv2d matches finite differences") {
    Rng rng(7);
    Tensor<double> x({2, 6, 6, 3});
    rng.fill_normal(x);
    nn::ConvLayer<double> conv;
    conv.init(rng, 3, 4, 3, 1, true, false);
    Tensor<double> r({2, 6, 6, 4});
    rng.fill_normal(r);

    auto loss = [&]() {
        Tensor<double> y = conv.eval(x);
        return y.vec().dot(r.vec());
    };
    typename nn::ConvLayer<double>::Cache cache;
    Tensor<double> y = conv.fwd(x, cache);
    Tensor<double> dx = conv.bwd(cache, r);

    nn::ParamSet<double> ps;
    conv.collect(ps, "conv");
    double worst = 0.0;
    for (size_t i = 0; i < ps.count(); ++i)
        for (int64_t j = 0; j < ps.weights[i]->size(); j += 5) {
            double num = fdcheck::central_diff(loss, &(*ps.weights[i])[j]);
            worst = std::max(worst, fdcheck::rel_err((*ps.grads[i])[j], num));
        }
    CHECK(worst < 1e-8);
    CHECK(fdcheck::max_input_grad_err(x, dx, loss) < 1e-8);
}

TEST_CASE("dense matches finite differences") {
    Rng rng(9);
    Tensor<double> x({3, 5});
    rng.fill_normal(x);
    nn::DenseLayer<double> fc;
    fc.init(rng, 5, 4, true, false);
    Tensor<double> r({3, 4});
    rng.fill_normal(r);
    auto loss = [&]() { return fc.eval(x).vec().dot(r.vec()); };

    typename nn::DenseLayer<double>::Cache c;
    fc.fwd(x, c);
    Tensor<double> dx = fc.bwd(c, r);
    nn::ParamSet<double> ps;
    fc.collect(ps, "fc");
    double worst = 0.0;
    for (size_t i = 0; i < ps.count(); ++i)
        for (int64_t j = 0; j < ps.weights[i]->size(); ++j) {
            double num = fdcheck::central_diff(loss, &(*ps.weights[i])[j]);
            worst = std::max(worst, fdcheck::rel_err((*ps.grads[i])[j], num));
        }
    CHECK(worst < 1e-9);
    CHECK(fdcheck::max_input_grad_err(x, dx, loss) < 1e-9);
}

TEST_CASE("spectral-normalized dense gradient matches finite differences") {
    Rng rng(11);
    Tensor<double> x({4, 6});
    rng.fill_normal(x);
    nn::DenseLayer<double> fc;
    fc.init(rng, 6, 5, false, true);
    // settle the power iteration, then freeze it for differentiation
    for (int i = 0; i < 200; ++i) fc.sn.power_iterate(fc.w);
    Tensor<double> r({4, 5});
    rng.fill_normal(r);
    auto loss = [&]() {
        typename nn::DenseLayer<double>::Cache c;
        return fc.fwd(x, c).vec().dot(r.vec());
    };
    typename nn::DenseLayer<double>::Cache c;
    fc.fwd(x, c);
    fc.bwd(c, r);
    double worst = 0.0;
    for (int64_t j = 0; j < fc.w.size(); ++j) {
        double num = fdcheck::central_diff(loss, &fc.w[j]);
        worst = std::max(worst, fdcheck::rel_err(fc.gw[j], num));
    }
    CHECK(worst < 1e-7);
}

TEST_CASE("pooling and resampling backward match finite differences") {
    Rng rng(13);
    Tensor<double> x({2, 4, 4, 3});
    rng.fill_normal(x);
    Tensor<double> r_pool({2, 2, 2, 3}), r_up({2, 8, 8, 3}), r_sum({2, 3});
    rng.fill_normal(r_pool);
    rng.fill_normal(r_up);
    rng.fill_normal(r_sum);

    auto check = [&](auto fwd, auto bwd, const Tensor<double>& r) {
        auto loss = [&]() { return fwd(x).vec().dot(r.vec()); };
        Tensor<double> dx = bwd(r);
        CHECK(fdcheck::max_input_grad_err(x, dx, loss) < 1e-9);
    };
    check([](const Tensor<double>& t) { return nn::avgpool2_fwd(t); },
          [&](const Tensor<double>& r_) { return nn::avgpool2_bwd(r_, 4, 4); }, r_pool);
    check([](const Tensor<double>& t) { return nn::upsample2_fwd(t); },
          [&](const Tensor<double>& r_) { return nn::upsample2_bwd(r_); }, r_up);
    check([](const Tensor<double>& t) { return nn::global_sum_pool_fwd(t); },
          [&](const Tensor<double>& r_) { return nn::global_sum_pool_bwd(r_, 4, 4); }, r_sum);
}

TEST_CASE("batch standardization: hand-computed example") {
    // input [0, 2], gamma 3, beta 1, eps 0: mean 1, std 1 -> [-2, 4]
    Tensor<double> x({2, 1, 1, 1});
    x[0] = 0.0;
    x[1] = 2.0;
    Tensor<double> xhat = nn::standardize_fwd(x, 0.0, static_cast<nn::StandardizeCache<double>*>(nullptr));
    Tensor<double> gamma = Tensor<double>::full({2, 1}, 3.0);
    Tensor<double> beta = Tensor<double>::full({2, 1}, 1.0);
    Tensor<double> y = nn::modulate_fwd(xhat, gamma, beta);
    CHECK(y[0] == doctest::Approx(-2.0).epsilon(1e-12));
    CHECK(y[1] == doctest::Approx(4.0).epsilon(1e-12));
}

TEST_CASE("batch standardization: unit gain leaves mean 0, variance 1") {
    Rng rng(17);
    Tensor<double> x({8, 3, 3, 5});
    rng.fill_normal(x, 2.5, -1.0);
    Tensor<double> xhat = nn::standardize_fwd(x, 1e-5, static_cast<nn::StandardizeCache<double>*>(nullptr));
    Tensor<double> mu, var;
    nn::batch_moments(xhat, mu, var);
    for (int c = 0; c < 5; ++c) {
        CHECK(std::fabs(mu[c]) < 1e-4);
        CHECK(std::fabs(var[c] - 1.0) < 1e-4);
    }
}

TEST_CASE("conditioned batch norm: applying twice equals applying once") {
    Rng rng(19);
    nn::CondBn<double> bn;
    bn.init(rng, 3, 4, 4, 1e-5); // heads start at gamma=1, beta=0
    Tensor<double> x({6, 2, 2, 4}), cond({6, 3});
    rng.fill_normal(x, 1.0, 0.7);
    rng.fill_normal(cond);
    typename nn::CondBn<double>::Cache c1, c2;
    auto once = bn.fwd(x, cond, c1);
    auto twice = bn.fwd(once, cond, c2);
    for (int64_t i = 0; i < once.size(); ++i)
        CHECK(std::fabs(once[i] - twice[i]) < 1e-5);
}

TEST_CASE("constant channel collapses to the bias head") {
    Tensor<double> x = Tensor<double>::full({3, 2, 2, 1}, 0.37);
    Tensor<double> xhat = nn::standardize_fwd(x, 1e-5, static_cast<nn::StandardizeCache<double>*>(nullptr));
    Tensor<double> gamma = Tensor<double>::full({3, 1}, 2.0);
    Tensor<double> beta = Tensor<double>::full({3, 1}, -0.25);
    Tensor<double> y = nn::modulate_fwd(xhat, gamma, beta);
    for (int64_t i = 0; i < y.size(); ++i)
        CHECK(std::fabs(y[i] - (-0.25)) < std::sqrt(1e-5) * 2.0);
}

TEST_CASE("batch norm training mode rejects batch size 1") {
    Tensor<double> x({1, 2, 2, 3});
    CHECK_THROWS(nn::standardize_fwd(x, 1e-5, static_cast<nn::StandardizeCache<double>*>(nullptr)));
}

TEST_CASE("standardization backward matches finite differences") {
    Rng rng(23);
    Tensor<double> x({4, 2, 2, 3});
    rng.fill_normal(x);
    Tensor<double> r(x.shape());
    rng.fill_normal(r);
    auto loss = [&]() {
        return nn::standardize_fwd(x, 1e-5, static_cast<nn::StandardizeCache<double>*>(nullptr))
            .vec()
            .dot(r.vec());
    };
    nn::StandardizeCache<double> cache;
    nn::standardize_fwd(x, 1e-5, &cache);
    Tensor<double> dx = nn::standardize_bwd(r, cache);
    CHECK(fdcheck::max_input_grad_err(x, dx, loss, 1e-6) < 1e-6);
}

TEST_CASE("conditioned batch norm backward matches finite differences") {
    Rng rng(29);
    nn::CondBn<double> bn;
    bn.init(rng, 6, 5, 4, 1e-5);
    // move the heads off their identity initialization
    for (auto* t : {&bn.g2.w, &bn.b2.w}) rng.fill_normal(*t, 0.3);
    Tensor<double> x({3, 2, 2, 4}), cond({3, 6});
    rng.fill_normal(x);
    rng.fill_normal(cond);
    Tensor<double> r(x.shape());
    rng.fill_normal(r);

    auto loss = [&]() {
        typename nn::CondBn<double>::Cache c;
        return bn.fwd(x, cond, c).vec().dot(r.vec());
    };
    typename nn::CondBn<double>::Cache c;
    bn.fwd(x, cond, c);
    Tensor<double> dcond({3, 6});
    Tensor<double> dx = bn.bwd(c, r, dcond);

    nn::ParamSet<double> ps;
    bn.collect(ps, "bn");
    auto compute = [] {};
    double worst = 0.0;
    for (size_t i = 0; i < ps.count(); ++i)
        for (int64_t j = 0; j < ps.weights[i]->size(); j += 3) {
            double num = fdcheck::central_diff(loss, &(*ps.weights[i])[j], 1e-6);
            worst = std::max(worst, fdcheck::rel_err((*ps.grads[i])[j], num));
        }
    CHECK(worst < 1e-6);
    CHECK(fdcheck::max_input_grad_err(x, dx, loss, 1e-6) < 1e-6);
    // conditioning gradient
    double worst_c = 0.0;
    for (int64_t j = 0; j < cond.size(); ++j) {
        double num = fdcheck::central_diff(loss, &cond[j], 1e-6);
        worst_c = std::max(worst_c, fdcheck::rel_err(dcond[j], num));
    }
    CHECK(worst_c < 1e-6);
}

TEST_CASE("spectral norm: diagonal and identity spectra") {
    Rng rng(31);
    Tensor<double> w({2, 2}); // stored [K, O]; matrix view is the transpose
    w.at2(0, 0) = 3.0;
    w.at2(1, 1) = 1.0;
    nn::SpectralNorm<double> sn;
    sn.init(rng, 2, 2);
    double sigma = 0.0;
    for (int i = 0; i < 100; ++i) sigma = sn.power_iterate(w);
    CHECK(sigma == doctest::Approx(3.0).epsilon(1e-6));
    Tensor<double> wn = sn.apply(w, true, &sigma);
    // normalized top singular value is 1
    nn::SpectralNorm<double> sn2;
    sn2.init(rng, 2, 2);
    double s2 = 0.0;
    for (int i = 0; i < 100; ++i) s2 = sn2.power_iterate(wn);
    CHECK(s2 == doctest::Approx(1.0).epsilon(1e-6));

    Tensor<double> eye({3, 3});
    for (int i = 0; i < 3; ++i) eye.at2(i, i) = 1.0;
    nn::SpectralNorm<double> sn3;
    sn3.init(rng, 3, 3);
    double s3 = 0.0;
    Tensor<double> eyen = sn3.apply(eye, true, &s3);
    CHECK(s3 == doctest::Approx(1.0).epsilon(1e-9));
    for (int64_t i = 0; i < eye.size(); ++i) CHECK(eyen[i] == doctest::Approx(eye[i]).epsilon(1e-9));
}

TEST_CASE("spectral norm: power iteration matches the SVD oracle") {
    Rng rng(37);
    Tensor<double> w({16, 8}); // [K=16, O=8]
    rng.fill_normal(w);
    nn::SpectralNorm<double> sn;
    sn.init(rng, 16, 8);
    double sigma = 0.0;
    for (int i = 0; i < 50; ++i) sigma = sn.power_iterate(w);

    Eigen::MatrixXd m(8, 16);
    for (int o = 0; o < 8; ++o)
        for (int k = 0; k < 16; ++k) m(o, k) = w.at2(k, o);
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
    const double top = svd.singularValues()(0);
    CHECK(std::fabs(sigma - top) / top < 1e-3);
}

TEST_CASE("spectral norm: zero matrix stays finite") {
    Rng rng(41);
    Tensor<double> w({4, 3});
    nn::SpectralNorm<double> sn;
    sn.init(rng, 4, 3);
    double sigma = 0.0;
    Tensor<double> wn = sn.apply(w, true, &sigma);
    CHECK(sigma >= 1e-12);
    for (int64_t i = 0; i < wn.size(); ++i) CHECK(std::isfinite(wn[i]));
}

TEST_CASE("orthogonal init produces orthonormal columns") {
    Rng rng(43);
    Tensor<double> w({12, 5});
    nn::orthogonal_init(w, rng);
    auto m = w.mat();
    Eigen::MatrixXd g = (m.transpose() * m).eval();
    for (int i = 0; i < 5; ++i)
        for (int j = 0; j < 5; ++j)
            CHECK(std::fabs(g(i, j) - (i == j ? 1.0 : 0.0)) < 1e-10);
}

TEST_CASE("softmax cross-entropy gradient matches finite differences") {
    Rng rng(47);
    Tensor<double> logits({4, 6});
    rng.fill_normal(logits);
    std::vector<int> y = {1, 0, 5, 3};
    auto loss = [&]() { return nn::softmax_ce_fwd<double>(logits, y); };
    Tensor<double> probs;
    nn::softmax_ce_fwd(logits, y, &probs);
    Tensor<double> d = nn::softmax_ce_bwd(probs, y);
    CHECK(fdcheck::max_input_grad_err(logits, d, loss, 1e-6) < 1e-8);
}

TEST_CASE("argmax tie-break picks the lowest index") {
    Tensor<double> z({1, 3});
    z.at2(0, 0) = 0.1;
    z.at2(0, 1) = 2.0;
    z.at2(0, 2) = -1.0;
    CHECK(nn::argmax_row(z, 0) == 1);
    Tensor<double> ties = Tensor<double>::full({1, 4}, 0.5);
    CHECK(nn::argmax_row(ties, 0) == 0);
}

TEST_CASE("adam with decay 0 and ema fixed points") {
    Rng rng(53);
    Tensor<double> w({3, 3}), g({3, 3});
    rng.fill_normal(w);
    nn::ParamSet<double> ps;
    ps.add("w", &w, &g);

    nn::Ema<double> ema;
    ema.init_from(ps);
    Tensor<double> w0 = w;
    w[0] += 1.0;
    ema.update(ps, 1.0); // decay 1: shadow unchanged
    CHECK(ema.shadow[0][0] == doctest::Approx(w0[0]));
    ema.update(ps, 0.0); // decay 0: shadow tracks current weights
    CHECK(ema.shadow[0][0] == doctest::Approx(w[0]));
}

TEST_CASE("rng stream is reproducible and serializable") {
    Rng a(123), b(123);
    for (int i = 0; i < 100; ++i) CHECK(a.normal() == b.normal());
    std::string state = a.serialize();
    Rng c(0);
    c.deserialize(state);
    for (int i = 0; i < 100; ++i) CHECK(a.normal() == c.normal());
    // child streams differ from the parent and from each other
    Rng p(5);
    CHECK(p.child("a").next_u64() != p.child("b").next_u64());
}

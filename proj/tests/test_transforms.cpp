#include <catch2/catch.hpp>

#include "drills/transforms.hpp"
#include "testutil.hpp"

using namespace drills;
using namespace drills::test;

TEST_CASE("RevNet round trip is exact to floating point") {
    Rng rng(11);
    for (int d : {2, 3, 8}) {
        RevNet r = make_revnet(d, rng);
        double worst = 0.0;
        for (int i = 0; i < 1000; ++i) {
            Vec x = random_vec(rng, d);
            Vec back = revnet_inverse_batch(r, revnet_forward_batch(r, Mat(x.transpose())))
                           .row(0)
                           .transpose();
            worst = std::max(worst, (back - x).cwiseAbs().maxCoeff());
        }
        INFO("d = " << d);
        CHECK(worst < 1e-10);
    }
}

TEST_CASE("zero-parameter RevNet is the identity") {
    RevNet r = make_identity_revnet(3, 10);
    Vec x(3);
    x << 0.4, -0.9, 0.1;
    CHECK((revnet_forward_batch(r, Mat(x.transpose())).row(0).transpose() - x)
              .cwiseAbs()
              .maxCoeff() == 0.0);
    CHECK((pseudo_inverse_jacobian(Transform(r), x) - Mat::Identity(3, 3)).cwiseAbs().maxCoeff() <
          1e-14);
}

TEST_CASE("PRNN forward with zero-weight g propagates biases only") {
    Rng rng(3);
    Prnn p = make_prnn(2, rng);
    for (Mat& w : p.g.weights) w.setZero();
    for (Vec& b : p.g.biases) b.setRandom();
    Vec x1(2), x2(2);
    x1 << 0.1, 0.9;
    x2 << -0.7, 0.3;
    Vec z1 = transform_forward(Transform(p), x1);
    Vec z2 = transform_forward(Transform(p), x2);
    CHECK((z1 - z2).cwiseAbs().maxCoeff() == 0.0);  // constant in x
}

TEST_CASE("PRNN evaluation is deterministic") {
    Rng rng(17);
    Prnn p = make_prnn(3, rng);
    Vec x = random_vec(rng, 3);
    Vec a = transform_forward(Transform(p), x);
    Vec b = transform_forward(Transform(p), x);
    REQUIRE(a.allFinite());
    CHECK(a == b);
    CHECK(pseudo_inverse_jacobian(Transform(p), x) == pseudo_inverse_jacobian(Transform(p), x));
}

TEST_CASE("untrained PRNN round trip is generally nonzero") {
    Rng rng(23);
    Prnn p = make_prnn(2, rng);
    Vec x(2);
    x << 0.5, -0.25;
    Transform t(p);
    Vec back = transform_pseudo_inverse(t, transform_forward(t, x));
    CHECK((back - x).norm() > 1e-6);  // soft constraint only
}

TEST_CASE("PRNN pseudo-inverse Jacobian delegates to h") {
    Rng rng(29);
    Prnn p = make_prnn(2, rng);
    Vec z = random_vec(rng, 2);
    CHECK((pseudo_inverse_jacobian(Transform(p), z) - mlp_input_jacobian(p.h, z))
              .cwiseAbs()
              .maxCoeff() == 0.0);
}

TEST_CASE("RevNet pseudo-inverse Jacobian matches finite differences") {
    Rng rng(31);
    for (int d : {2, 3}) {
        RevNet r = make_revnet(d, rng);
        Transform t(r);
        Vec z = random_vec(rng, d);
        Mat j = pseudo_inverse_jacobian(t, z);
        double h = 1e-6;
        for (int c = 0; c < d; ++c) {
            Vec zp = z, zm = z;
            zp[c] += h;
            zm[c] -= h;
            Vec fd = (transform_pseudo_inverse(t, zp) - transform_pseudo_inverse(t, zm)) / (2 * h);
            INFO("d=" << d << " col=" << c);
            CHECK(rel_err(Vec(j.col(c)), fd) < 1e-6);
        }
    }
}

TEST_CASE("Jacobian columns track their z index") {
    Rng rng(37);
    Prnn p = make_prnn(3, rng);
    Vec z = random_vec(rng, 3);
    Mat j = pseudo_inverse_jacobian(Transform(p), z);
    // column i must equal the single-direction derivative along e_i
    for (int i = 0; i < 3; ++i) {
        Tape t;
        int zn = t.constant(Mat(z.transpose()));
        t.seed_identity(zn, 1, -i);  // one direction hitting column i
        MlpNodes ids = tape_register_mlp(t, p.h);
        int y = tape_mlp_apply(t, p.h, ids, zn);
        CHECK((t.tan(y).row(0).transpose() - j.col(i)).cwiseAbs().maxCoeff() < 1e-12);
    }
}

TEST_CASE("transform parameter flatten/unflatten round trip") {
    Rng rng(41);
    SECTION("prnn") {
        Transform t(make_prnn(2, rng));
        Vec theta = transform_flatten(t);
        REQUIRE(theta.size() == transform_param_count(t));
        Transform t2(make_prnn(2, rng));
        transform_unflatten(t2, theta);
        CHECK(transform_flatten(t2) == theta);
    }
    SECTION("revnet, odd dimension") {
        Transform t(make_revnet(3, rng));
        Vec theta = transform_flatten(t);
        REQUIRE(theta.size() == transform_param_count(t));
        Transform t2(make_revnet(3, rng));
        transform_unflatten(t2, theta);
        CHECK(transform_flatten(t2) == theta);
        Vec x = random_vec(rng, 3);
        CHECK(transform_forward(t, x) == transform_forward(t2, x));
    }
}

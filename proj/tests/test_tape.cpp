#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "plode/problems.hpp"
#include "plode/tape.hpp"

using namespace plode;

TEST_CASE("single abs node tape") {
    TapeBuilder tb;
    tb.output(tb.abs(tb.input()));
    Tape t = tb.build();
    CHECK(t.n_inputs() == 1);
    CHECK(t.n_outputs() == 1);
    CHECK(t.n_abs() == 1);
    Vec x{-3.0};
    CHECK(t.evaluate(x)[0] == 3.0);
}

TEST_CASE("max desugars through the abs identity") {
    TapeBuilder tb;
    NodeRef u = tb.input();
    NodeRef v = tb.input();
    tb.output(tb.max(u, v));
    Tape t = tb.build();
    CHECK(t.n_abs() == 1);
    CHECK(t.evaluate(Vec{2.0, 5.0})[0] == 5.0);
    CHECK(t.evaluate(Vec{-1.0, -4.0})[0] == -1.0);
    CHECK(t.evaluate(Vec{3.0, 3.0})[0] == 3.0);
}

TEST_CASE("min desugars through the abs identity") {
    TapeBuilder tb;
    tb.output(tb.min(tb.input(), tb.input()));
    Tape t = tb.build();
    CHECK(t.evaluate(Vec{2.0, 5.0})[0] == 2.0);
    CHECK(t.evaluate(Vec{-7.0, 1.0})[0] == -7.0);
}

TEST_CASE("rolling stone tape evaluates the right hand side") {
    Problem p = rolling_stone();
    CHECK(p.tape->n_inputs() == 2);
    CHECK(p.tape->n_outputs() == 2);
    CHECK(p.tape->n_abs() == 2);
    Vec y = p.tape->evaluate(Vec{1.0, 1.0});
    CHECK(y[0] == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(y[1] == doctest::Approx(0.0).epsilon(1e-15));
    // off the planar section: x1 = 2 gives -2 - 0.5 + 1.5 = -1
    y = p.tape->evaluate(Vec{2.0, 0.0});
    CHECK(y[1] == doctest::Approx(-1.0).epsilon(1e-15));
}

TEST_CASE("diode tape evaluates at the origin") {
    Problem p = diode_circuit();
    CHECK(p.tape->n_inputs() == 3);
    CHECK(p.tape->n_abs() == 1);
    Vec y = p.tape->evaluate(Vec{0.0, 0.0, 0.0});
    CHECK(y[0] == 1.0);
    CHECK(y[1] == 0.0);
    CHECK(y[2] == 0.0);
}

TEST_CASE("diode g(z) picks the alpha branch for positive current") {
    // g(C x3) with C x3 = 2e-13 > 0 must contribute z / alpha = z / 2
    DiodeConstants k;
    Problem p = diode_circuit(k);
    double x3 = 2.0;  // z = 2e-13
    Vec y = p.tape->evaluate(Vec{0.0, 0.0, x3});
    double z = k.C * x3;
    double expect = -(0.0 - 0.0 + z / k.alpha) / (k.L * k.C);
    CHECK(y[2] == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("division records as recip then mul") {
    TapeBuilder tb;
    NodeRef a = tb.input();
    NodeRef b = tb.input();
    tb.output(tb.div(a, b));
    Tape t = tb.build();
    CHECK(t.evaluate(Vec{3.0, 4.0})[0] == doctest::Approx(0.75).epsilon(1e-15));
    CHECK_THROWS_AS(t.evaluate(Vec{1.0, 0.0}), EvalDomainError);
}

TEST_CASE("domain violations name the offending node") {
    TapeBuilder tb;
    tb.output(tb.log(tb.input()));
    Tape t = tb.build();
    try {
        t.evaluate(Vec{-1.0});
        FAIL("expected EvalDomainError");
    } catch (const EvalDomainError& e) {
        CHECK(e.node_index == 1);
    }
    CHECK_THROWS_AS(t.evaluate(Vec{0.0}), EvalDomainError);

    TapeBuilder tb2;
    tb2.output(tb2.sqrt(tb2.input()));
    CHECK_THROWS_AS(tb2.build().evaluate(Vec{-4.0}), EvalDomainError);
}

TEST_CASE("builder rejects forward references") {
    TapeBuilder tb;
    NodeRef bogus{5};
    CHECK_THROWS_AS(tb.abs(bogus), std::invalid_argument);
}

TEST_CASE("intermediates come back for reuse") {
    TapeBuilder tb;
    NodeRef x = tb.input();
    tb.output(tb.mul(x, x));
    Tape t = tb.build();
    Vec inter;
    Vec y = t.evaluate(Vec{3.0}, &inter);
    CHECK(y[0] == 9.0);
    REQUIRE(inter.size() == 2);
    CHECK(inter[0] == 3.0);
    CHECK(inter[1] == 9.0);
}

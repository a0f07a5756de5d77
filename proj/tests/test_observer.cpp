#include <random>
#include <set>

#include "doctest.h"
#include "oracle.hpp"
#include "smrmc/freeable.hpp"
#include "smrmc/runtime.hpp"
#include "smrmc/stdlib_observers.hpp"

using namespace smrmc;

namespace {

Event protect(Value t, Value a, Value i) { return {"protect", {t, a, i}}; }
Event retire(Value t, Value a) { return {"retire", {t, a}}; }
Event exit_(Value t) { return {"exit", {t}}; }
Event free_(Value a) { return {"free", {a}}; }

Universe small() {
    Universe u;
    u.threads = {0, 1};
    u.addresses = {1, 2};
    u.integers = {0};
    return u;
}

History random_history(std::mt19937& rng, const Observer& o, const Universe& u, int len) {
    auto alpha = oracle::events(o, u, nullptr, false);
    History h;
    for (int i = 0; i < len; ++i) h.push_back(alpha[rng() % alpha.size()]);
    return h;
}

}  // namespace

TEST_CASE("stdlib observers have the documented shape") {
    auto base = stdlib_observer("base");
    CHECK(base.locations.size() == 3);
    CHECK(std::count(base.accepting.begin(), base.accepting.end(), true) == 1);
    auto hp = stdlib_observer("hp(1)");
    CHECK(hp.locations.size() == 5);
    CHECK(std::count(hp.accepting.begin(), hp.accepting.end(), true) == 1);
    CHECK(stdlib_observer("ebr").locations.size() == 5);
    CHECK(stdlib_observer("gc").vars.empty());
    for (auto n : {"dta", "frozen", "ts-mark", "ts-done"}) CHECK_NOTHROW(stdlib_observer(n));
    CHECK_THROWS_AS(stdlib_observer("nope"), ObserverError);
}

TEST_CASE("hazard pointer fixtures") {
    auto o = smr_observer("hp");
    Universe u = small();
    History h1{protect(0, 1, 0), exit_(0), retire(1, 1), exit_(1), free_(1)};
    History h2{protect(0, 1, 0), retire(1, 1), exit_(0), exit_(1), free_(1)};
    CHECK(is_violation(o, h1, u));
    CHECK_FALSE(is_violation(o, h2, u));
    CHECK(oracle::violates(o, h1, u));
    CHECK_FALSE(oracle::violates(o, h2, u));
}

TEST_CASE("base observer forbids freeing unretired memory") {
    auto o = stdlib_observer("base");
    Universe u = small();
    CHECK(is_violation(o, {free_(1)}, u));
    CHECK_FALSE(is_violation(o, {retire(0, 1), free_(1)}, u));
    CHECK(is_violation(o, {retire(0, 1), free_(1), free_(1)}, u));
    CHECK_FALSE(is_violation(stdlib_observer("gc"), {retire(0, 1)}, u));
    CHECK(is_violation(stdlib_observer("gc"), {free_(2)}, u));
}

TEST_CASE("epoch observer protects retirements during active phases") {
    auto o = smr_observer("ebr");
    Universe u = small();
    Event leave{"leaveQ", {0}}, enter{"enterQ", {0}};
    CHECK(is_violation(o, {leave, exit_(0), retire(1, 1), free_(1)}, u));
    CHECK_FALSE(is_violation(o, {leave, exit_(0), retire(1, 1), enter, free_(1)}, u));
    CHECK_FALSE(is_violation(o, {leave, retire(1, 1), exit_(0), free_(1)}, u));
}

TEST_CASE("cross product accepts exactly the union of violations") {
    std::mt19937 rng(7);
    std::vector<std::pair<std::string, std::string>> pairs{{"base", "hp"}, {"base", "ebr"}, {"hp", "ebr"},
                                                           {"ts-mark", "ts-done"}, {"dta", "frozen"}};
    Universe u = small();
    for (auto& [x, y] : pairs) {
        auto a = stdlib_observer(x), b = stdlib_observer(y);
        auto p = cross_product(a, b);
        for (int i = 0; i < 150; ++i) {
            auto h = random_history(rng, p, u, 1 + static_cast<int>(rng() % 7));
            bool expect = oracle::violates(a, h, u) || oracle::violates(b, h, u);
            CHECK(is_violation(p, h, u) == expect);
            CHECK(oracle::violates(p, h, u) == expect);
        }
    }
}

TEST_CASE("cross product renames clashing variables of different sorts") {
    auto a = parse_observer("vars { x: thread; } locations { s initial; t accepting; } "
                            "transitions { s --exit(t) [t == x]--> t; }");
    auto b = parse_observer("vars { x: address; } locations { s initial; t accepting; } "
                            "transitions { s --free(a) [a == x]--> t; }");
    auto p = cross_product(a, b);
    CHECK(p.vars.size() == 2);
    CHECK(p.vars[0].name != p.vars[1].name);
    Universe u = small();
    CHECK(is_violation(p, {exit_(1)}, u));
    CHECK(is_violation(p, {free_(2)}, u));
}

TEST_CASE("observer text round trip") {
    for (auto n : {"base", "hp", "ebr", "gc", "dta", "frozen", "ts-mark", "ts-done"}) {
        auto o = stdlib_observer(n);
        auto q = parse_observer(print_observer(o));
        CHECK(q.locations == o.locations);
        CHECK(q.initial == o.initial);
        CHECK(q.accepting == o.accepting);
        CHECK(q.vars == o.vars);
        CHECK(q.transitions == o.transitions);
        CHECK(q.signatures == o.signatures);
    }
    auto p = smr_observer("hp");
    auto q = parse_observer(print_observer(p));
    CHECK(q.transitions == p.transitions);
}

TEST_CASE("malformed observers are rejected") {
    CHECK_THROWS_AS(parse_observer("vars { } locations { a; } transitions { }"), ObserverError);
    CHECK_THROWS(parse_observer("vars { } locations { a initial; } transitions { a --f(x)--> b; }"));
    CHECK_THROWS(parse_observer("vars { v: address; } locations { a initial; } "
                                "transitions { a --f(t, x) [x == v]--> a; a --f(t) --> a; }"));
    CHECK_THROWS(parse_observer("vars { v: address; u: thread; } locations { a initial; } "
                                "transitions { a --f(t) [t == v && t == u]--> a; }"));
    CHECK_THROWS(parse_observer("vars { v: spoon; } locations { a initial; } transitions { }"));
}

TEST_CASE("runtime steps match direct simulation") {
    std::mt19937 rng(11);
    Universe u = small();
    for (auto n : {"hp", "ebr", "none", "gc"}) {
        auto o = smr_observer(n);
        ObserverRuntime rt(o, u);
        for (int i = 0; i < 100; ++i) {
            auto h = random_history(rng, o, u, 1 + static_cast<int>(rng() % 8));
            CHECK(rt.accepting(rt.run(rt.initial(), h)) == oracle::violates(o, h, u));
        }
    }
}

TEST_CASE("address replacement") {
    Signatures sigs = smr_observer("hp").signatures;
    History h{retire(0, 1), free_(1)};
    History r = replace_address(h, 1, 2, sigs);
    CHECK(r == History{retire(0, 2), free_(2)});
    std::mt19937 rng(3);
    Universe u = small();
    auto o = smr_observer("hp");
    for (int i = 0; i < 100; ++i) {
        auto x = random_history(rng, o, u, 6);
        CHECK(replace_address(replace_address(x, 1, 2, sigs), 1, 2, sigs) == x);
        // renaming a history renames the violation status consistently
        CHECK(is_violation(o, x, u) == is_violation(o, replace_address(x, 1, 2, sigs), u));
    }
}

TEST_CASE("freeable membership") {
    auto o = smr_observer("hp");
    Universe u = small();
    History h{protect(0, 1, 0), exit_(0)};
    CHECK(freeable_contains(o, h, 2, {retire(1, 2), free_(2)}, u));
    CHECK_FALSE(freeable_contains(o, h, 1, {retire(1, 1), free_(1)}, u));
    CHECK_FALSE(freeable_contains(o, h, 1, {retire(1, 2), free_(2)}, u));
}

TEST_CASE("exact freeable inclusion agrees with bounded enumeration") {
    // Small universes keep the brute force tractable at depth 6.
    std::mt19937 rng(2024);
    struct Setup {
        std::string obs;
        Universe u;
        int hlen;
    };
    Universe tiny;
    tiny.threads = {0};
    tiny.addresses = {1};
    tiny.integers = {0};
    Universe two;
    two.threads = {0};
    two.addresses = {1, 2};
    two.integers = {0};
    std::vector<Setup> setups{{"none", small(), 5}, {"gc", small(), 3}, {"ebr", tiny, 5},
                              {"ts-mark", two, 5},  {"ts-done", two, 5}, {"hp", tiny, 5}};
    int cases = 0, disagreements = 0, non_trivial = 0;
    for (auto& s : setups) {
        auto o = s.obs == "ts-mark" || s.obs == "ts-done" ? stdlib_observer(s.obs) : smr_observer(s.obs);
        ObserverRuntime rt(o, s.u);
        int per = s.obs == "hp" ? 20 : 40;
        for (int i = 0; i < per; ++i) {
            auto h1 = random_history(rng, o, s.u, static_cast<int>(rng() % (s.hlen + 1)));
            auto h2 = random_history(rng, o, s.u, static_cast<int>(rng() % (s.hlen + 1)));
            auto adrs = oracle::domain(Sort::Address, s.u);
            Value a = adrs[rng() % adrs.size()];
            auto exact = rt.freeable_inclusion(rt.run(rt.initial(), h1), a, rt.run(rt.initial(), h2), a);
            bool bounded = oracle::bounded_included(o, h1, h2, a, s.u, 6);
            ++cases;
            if (exact.included != bounded) ++disagreements;
            if (!exact.included) {
                ++non_trivial;
                // the counterexample must really separate the two sets
                CHECK(freeable_contains(o, h1, a, exact.counterexample, s.u));
                CHECK_FALSE(freeable_contains(o, h2, a, exact.counterexample, s.u));
            }
        }
    }
    CHECK(cases >= 200);
    CHECK(non_trivial > 20);
    CHECK(disagreements == 0);
}

TEST_CASE("pruned freeable inclusion agrees with the plain product search") {
    // Oracle: breadth-first search over all pairs of configurations without
    // subsumption, renaming the second address onto the first beforehand.
    auto plain = [](ObserverRuntime& rt, ConfigId c1, Value a1, ConfigId c2, Value a2) {
        if (rt.accepting(c1)) return true;
        if (rt.accepting(c2)) return false;
        c2 = rt.swap(c2, a1, a2);
        std::set<std::pair<ConfigId, ConfigId>> seen;
        std::vector<std::pair<ConfigId, ConfigId>> work{{rt.live(c1, a1), rt.live(c2, a1)}};
        seen.insert(work[0]);
        for (size_t i = 0; i < work.size(); ++i)
            for (EventId e : rt.alphabet(a1)) {
                ConfigId x = rt.step(work[i].first, e);
                if (rt.accepting(x)) continue;
                ConfigId y = rt.step(work[i].second, e);
                if (rt.accepting(y)) return false;
                std::pair<ConfigId, ConfigId> n{rt.live(x, a1), rt.live(y, a1)};
                if (seen.insert(n).second) work.push_back(n);
            }
        return true;
    };
    std::mt19937 rng(77);
    Universe u;
    u.threads = {0, 1};
    u.addresses = {1, 2};
    u.integers = {0};
    int cases = 0, excluded = 0;
    for (auto n : {"hp", "ebr", "none"}) {
        auto o = smr_observer(n);
        ObserverRuntime rt(o, u);
        for (int i = 0; i < 60; ++i) {
            auto h1 = random_history(rng, o, u, static_cast<int>(rng() % 7));
            auto h2 = i % 3 == 0 ? h1 : random_history(rng, o, u, static_cast<int>(rng() % 7));
            if (i % 3 == 0 && !h2.empty()) h2.pop_back();
            Value a1 = 1 + static_cast<Value>(rng() % 2), a2 = 1 + static_cast<Value>(rng() % 2);
            ConfigId c1 = rt.run(rt.initial(), h1), c2 = rt.run(rt.initial(), h2);
            auto r = rt.freeable_inclusion(c1, a1, c2, a2);
            CHECK(r.included == plain(rt, c1, a1, c2, a2));
            ++cases;
            excluded += !r.included;
        }
    }
    CHECK(cases == 180);
    CHECK(excluded > 10);
}

TEST_CASE("elision support of the stdlib observers") {
    for (auto n : {"hp", "ebr"}) {
        auto o = smr_observer(n);
        auto r = check_elision_support(o, default_elision_universe(o), 3);
        CHECK_MESSAGE(r.replace.holds, n);
        CHECK_MESSAGE(r.fresh.holds, n);
        CHECK_MESSAGE(r.free.holds, n);
    }
}

TEST_CASE("elision check rejects a base observer whose free ignores the address") {
    auto bad = parse_observer(R"(
        vars { v: address; }
        locations { init initial; retired; final accepting; }
        transitions {
          init --retire(t: thread, a: address) [a == v]--> retired;
          retired --free(a: address) [true]--> init;
          init --free(a) [a == v]--> final;
        })");
    auto r = check_elision_support(bad, default_elision_universe(bad), 3);
    CHECK_FALSE(r.free.holds);
    REQUIRE_FALSE(r.free.witnesses.empty());
    auto& w = r.free.witnesses[0];
    Universe u = default_elision_universe(bad);
    // the witness continuation is allowed after exactly one of h1 / h2
    bool in1 = freeable_contains(bad, w.h1, w.b, w.continuation, u);
    bool in2 = freeable_contains(bad, w.h2, w.b, w.continuation, u);
    CHECK(in1 != in2);
}

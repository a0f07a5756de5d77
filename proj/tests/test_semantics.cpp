#include <algorithm>

#include "doctest.h"
#include "smrmc/semantics.hpp"
#include "smrmc/stdlib_observers.hpp"

using namespace smrmc;

namespace {

std::string corpus(const std::string& name) { return std::string(SMRMC_CORPUS_DIR) + "/programs/" + name; }

Program scratch(const std::string& body) {
    return parse_program("program scratch;\nlayout Node { data data; ptr next; }\n"
                         "smr api { retire(ptr); protect(ptr, int); }\nshared ptr P, Q, R;\ninit { }\n"
                         "operation go() {\n" + body + "\n}\n");
}

Bounds small(int threads = 1, int ops = 1, int addresses = 3) {
    Bounds b;
    b.threads = threads;
    b.ops = ops;
    b.addresses = addresses;
    b.data_max = 0;
    return b;
}

Step run(const Machine& m, const State& s, Action a) {
    auto st = m.apply(s, a);
    REQUIRE(st.has_value());
    return *st;
}

Step start(const Machine& m, const State& s, int t = 0) { return run(m, s, {Action::Kind::Start, t, 0}); }
Step step(const Machine& m, const State& s, int t = 0, int choice = 0) { return run(m, s, {Action::Kind::Step, t, choice}); }
Step env_free(const Machine& m, const State& s, Value a) { return run(m, s, {Action::Kind::Free, -1, a}); }

Cell lookup(const ValidMemory& r, const std::string& name, bool* present = nullptr) {
    for (auto& [n, v] : r.cells)
        if (n == name) {
            if (present) *present = true;
            return v;
        }
    if (present) *present = false;
    return kBot;
}

bool in_restriction(const Machine& m, const State& s, const std::string& name) {
    bool p = false;
    lookup(m.restrict_valid(s), name, &p);
    return p;
}

}  // namespace

TEST_CASE("initial states") {
    SUBCASE("Treiber: ToS is NULL and valid") {
        auto p = select_variant(load_program(corpus("treiber.prog")), "H");
        Machine m(p, smr_observer("hp"), std::nullopt, small());
        auto r = m.restrict_valid(m.initial());
        bool present = false;
        CHECK(lookup(r, "ToS", &present) == kNull);
        CHECK(present);
    }
    SUBCASE("empty init leaves pointers uninitialised and data zero") {
        auto p = parse_program("program e;\nshared ptr X;\nshared data D;\ninit { }\n");
        Machine m(p, smr_observer("gc"), std::nullopt, small());
        auto r = m.restrict_valid(m.initial());
        CHECK(lookup(r, "X") == kSeg);
        CHECK(lookup(r, "D") == 0);
    }
    SUBCASE("MS queue: Head and Tail share a fresh node whose next is NULL") {
        auto p = select_variant(load_program(corpus("ms_queue.prog")), "H");
        Machine m(p, smr_observer("hp"), std::nullopt, small());
        auto s = m.initial();
        auto r = m.restrict_valid(s);
        Cell head = lookup(r, "Head");
        CHECK(head >= 1);
        CHECK(lookup(r, "Tail") == head);
        CHECK(lookup(r, "@" + std::to_string(head) + ".next") == kNull);
        CHECK(m.check_invariants(s).empty());
    }
}

TEST_CASE("validity: reuse renders the old pointer invalid") {
    auto p = scratch("P = new Node;\nretire(P);\nQ = new Node;\nR = P;\nassume(P == Q);\nR = P;");
    Machine m(p, smr_observer("none"), std::nullopt, small());
    State s = m.initial();
    s = start(m, s).next;
    s = step(m, s).next;  // P = a1
    CHECK(in_restriction(m, s, "P"));
    s = step(m, s).next;  // enter retire
    s = step(m, s).next;  // exit
    s = env_free(m, s, 1).next;
    CHECK(!in_restriction(m, s, "P"));
    CHECK(m.check_invariants(s).empty());
    s = step(m, s, 0, 0).next;  // Q = a1 (reuse)
    CHECK(lookup(m.restrict_valid(s), "Q") == 1);
    CHECK(!in_restriction(m, s, "P"));
    SUBCASE("copying an invalid pointer yields an invalid pointer") {
        s = step(m, s).next;
        CHECK(!in_restriction(m, s, "R"));
    }
    SUBCASE("asserting equality with a valid pointer validates both") {
        s = step(m, s).next;
        auto st = step(m, s);
        CHECK(st.aba_prone);
        s = st.next;
        CHECK(in_restriction(m, s, "P"));
        s = step(m, s).next;
        CHECK(lookup(m.restrict_valid(s), "R") == 1);
    }
}

TEST_CASE("environment frees follow the SMR observer") {
    auto p = scratch("P = new Node;\nprotect(P, 0);\nretire(P);\nP = NULL;");
    Machine m(p, smr_observer("hp"), std::nullopt, small());
    State s = start(m, m.initial()).next;
    s = step(m, s).next;
    auto frees = [&](const State& x) {
        int n = 0;
        for (auto& st : m.successors(x)) n += st.action.kind == Action::Kind::Free;
        return n;
    };
    CHECK(frees(s) == 0);  // never retired
    s = step(m, s).next;   // protect
    s = step(m, s).next;   // exit
    s = step(m, s).next;   // retire
    s = step(m, s).next;   // exit
    CHECK(frees(s) == 0);  // protected before the retire
    auto q = scratch("P = new Node;\nretire(P);\nP = NULL;");
    Machine m2(q, smr_observer("hp"), std::nullopt, small());
    State t = start(m2, m2.initial()).next;
    for (int i = 0; i < 3; ++i) t = step(m2, t).next;
    int n = 0;
    for (auto& st : m2.successors(t))
        if (st.action.kind == Action::Kind::Free) {
            ++n;
            CHECK(m2.control_key(st.next) == m2.control_key(t));
        }
    CHECK(n == 1);
}

TEST_CASE("pointer races") {
    SUBCASE("dereferencing a dangling pointer is an unsafe access") {
        auto p = scratch("P = new Node;\nretire(P);\nP.next = NULL;");
        Machine m(p, smr_observer("none"), std::nullopt, small());
        State s = start(m, m.initial()).next;
        for (int i = 0; i < 3; ++i) s = step(m, s).next;
        s = env_free(m, s, 1).next;
        CHECK(step(m, s).fault == Fault::UnsafeAccess);
    }
    SUBCASE("dereferencing NULL is a segfault") {
        auto p = scratch("P = NULL;\nQ = P.next;");
        Machine m(p, smr_observer("none"), std::nullopt, small());
        State s = start(m, m.initial()).next;
        s = step(m, s).next;
        CHECK(step(m, s).fault == Fault::Segfault);
    }
    SUBCASE("retire through an invalid pointer is racy under both checks") {
        auto p = scratch("P = new Node;\nretire(P);\nretire(P);");
        Machine m(p, smr_observer("none"), std::nullopt, small());
        State s = start(m, m.initial()).next;
        for (int i = 0; i < 3; ++i) s = step(m, s).next;
        s = env_free(m, s, 1).next;
        auto st = step(m, s);
        CHECK(st.racy_exact == 1);
        CHECK(st.racy_fast == 1);
        CHECK(st.fault == Fault::RacyCall);
    }
    SUBCASE("protect through an invalid pointer is not racy") {
        auto p = scratch("P = new Node;\nretire(P);\nprotect(P, 0);");
        Machine m(p, smr_observer("hp"), std::nullopt, small());
        State s = start(m, m.initial()).next;
        for (int i = 0; i < 3; ++i) s = step(m, s).next;
        s = env_free(m, s, 1).next;
        auto st = step(m, s);
        CHECK(st.racy_exact == 0);
        CHECK(st.racy_fast == 0);
        CHECK(st.fault == Fault::None);
    }
    SUBCASE("retiring twice without a free is a double retire") {
        auto p = scratch("P = new Node;\nretire(P);\nretire(P);");
        Machine m(p, smr_observer("none"), std::nullopt, small());
        State s = start(m, m.initial()).next;
        for (int i = 0; i < 3; ++i) s = step(m, s).next;
        CHECK(step(m, s).fault == Fault::DoubleRetire);
        s = env_free(m, s, 1).next;
        CHECK(step(m, s).fault != Fault::DoubleRetire);
    }
}

TEST_CASE("malloc address choices per reuse mode") {
    auto p = scratch("P = new Node;\nretire(P);\nQ = new Node;");
    for (auto [mode, expect] : {std::pair{ReuseMode::Full, 2}, {ReuseMode::One, 2}, {ReuseMode::None, 1}}) {
        Bounds b = small();
        b.mode = mode;
        Machine m(p, smr_observer("none"), std::nullopt, b);
        State s = start(m, m.initial()).next;
        for (int i = 0; i < 3; ++i) s = step(m, s).next;
        s = env_free(m, s, 1).next;
        CHECK(m.thread_successors(s, 0).size() == static_cast<size_t>(expect));
    }
    SUBCASE("malloc enumerates data selector values") {
        Bounds b = small();
        b.data_max = 3;
        Machine m(scratch("P = new Node;"), smr_observer("gc"), std::nullopt, b);
        State s = start(m, m.initial()).next;
        CHECK(m.thread_successors(s, 0).size() == 4);
    }
    SUBCASE("exhausted address space") {
        Bounds b = small(1, 1, 1);
        Machine m(scratch("P = new Node;\nQ = new Node;"), smr_observer("gc"), std::nullopt, b);
        State s = start(m, m.initial()).next;
        s = step(m, s).next;
        CHECK(step(m, s).fault == Fault::Exhausted);
    }
}

TEST_CASE("similarity and memory equivalence") {
    auto p = scratch("P = new Node;\nretire(P);\nP = NULL;\nQ = new Node;");
    Machine m(p, smr_observer("none"), std::nullopt, small());
    State s = start(m, m.initial()).next;
    for (int i = 0; i < 4; ++i) s = step(m, s).next;
    State reused = step(m, env_free(m, s, 1).next, 0, 0).next;    // Q = a1
    State elided = step(m, env_free(m, s, 1).next, 0, 1).next;    // Q = a2
    CHECK(m.similar(reused, reused));
    CHECK(!m.similar(reused, elided));  // same shape, different address
    CHECK(m.similarity_key(reused) == m.similarity_key(elided));
    CHECK(m.mem_equiv(reused, reused, 1));
    CHECK(!m.mem_equiv(reused, elided, 1));
    CHECK(m.behavior_included(reused, reused));
    CHECK(m.similarity_key(reused) != m.similarity_key(s));
}

TEST_CASE("behavior inclusion is one-directional") {
    // τ: a protected then retired; σ: b protected, a retired.  σ allows free(a).
    auto p = parse_program("program b;\nlayout Node { data d; }\nsmr api { retire(ptr); protect(ptr, int); }\n"
                           "shared ptr P, Q;\ninit { P = new Node; Q = new Node; }\n"
                           "operation tau() { protect(P, 0); retire(P); Q = NULL; }\n"
                           "operation sigma() { protect(Q, 0); retire(P); Q = NULL; }\n");
    Machine m(p, smr_observer("hp"), std::nullopt, small());
    auto run_op = [&](int entry) {
        State s = run(m, m.initial(), {Action::Kind::Start, 0, entry}).next;
        for (int i = 0; i < 5; ++i) s = step(m, s).next;
        return s;
    };
    State tau = run_op(0), sigma = run_op(1);
    CHECK(m.similar(tau, tau));
    CHECK(m.behavior_included(tau, sigma));
    CHECK(!m.behavior_included(sigma, tau));
}

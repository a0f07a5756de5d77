// One line per acceptance criterion.  Exit status is non-zero if any fails.

#include <chrono>
#include <cstdlib>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>

#include "oracle.hpp"
#include "smrmc/analysis.hpp"
#include "smrmc/freeable.hpp"
#include "smrmc/runtime.hpp"
#include "smrmc/smr_verify.hpp"
#include "smrmc/stdlib_observers.hpp"

using namespace smrmc;

namespace {

constexpr double kDsLimit = 600, kSmrLimit = 300, kElisionLimit = 120;  // seconds

std::string corpus(const std::string& kind, const std::string& name) {
    return std::string(SMRMC_CORPUS_DIR) + "/" + kind + "/" + name;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

int workers() {
    const char* w = std::getenv("SMRMC_WORKERS");
    return w ? std::max(1, std::atoi(w)) : 1;
}

struct Outcome {
    bool pass = true;
    std::ostringstream note;
    void fail(const std::string& why) {
        pass = false;
        note << " FAILED[" << why << "]";
    }
};

struct DsCase {
    std::string program, smr, spec;
    bool hint = false;
    bool expect_verified = true;
};

const std::vector<DsCase> kTable = {
    {"coarse_stack", "gc", "stack"},        {"coarse_stack", "none", "stack"},
    {"coarse_queue", "gc", "queue"},        {"coarse_queue", "none", "queue"},
    {"treiber", "gc", "stack"},             {"treiber", "ebr", "stack"},
    {"treiber", "hp", "stack"},             {"treiber_opt", "hp", "stack", false, false},
    {"ms_queue", "gc", "queue"},            {"ms_queue", "ebr", "queue"},
    {"ms_queue", "hp", "queue"},            {"dglm_queue", "gc", "queue", true},
    {"dglm_queue", "ebr", "queue", true},   {"dglm_queue", "hp", "queue", true},
};

std::string tag_of(const std::string& smr) {
    return smr == "gc" ? "G" : smr == "none" ? "N" : smr == "hp" ? "H" : "E";
}

Bounds table_bounds(ReuseMode mode) {
    Bounds b;
    b.threads = 2;
    b.ops = 2;
    b.addresses = 5;
    b.mode = mode;
    return b;
}

std::unique_ptr<Machine> ds_machine(const DsCase& c, ReuseMode mode) {
    auto p = select_variant(load_program(corpus("programs", c.program + ".prog")), tag_of(c.smr));
    MachineOptions mo;
    mo.dglm_hint = c.hint;
    return std::make_unique<Machine>(p, smr_observer(c.smr), spec_observer(c.spec), table_bounds(mode), mo);
}

std::set<std::string> classes(const Machine& m, const Exploration& e) {
    std::set<std::string> out;
    for (auto& s : e.store) out.insert(m.similarity_key(s));
    return out;
}

bool includes(const std::set<std::string>& big, const std::set<std::string>& small) {
    return std::includes(big.begin(), big.end(), small.begin(), small.end());
}

// Collected over every corpus exploration for the property criterion.
struct Properties {
    size_t runs = 0, enter_checks = 0, racy_disagree = 0, invariant_violations = 0, states = 0;
    size_t monotone = 0;
    std::vector<std::string> not_monotone;
    void add(const Exploration& e) {
        ++runs;
        enter_checks += e.enter_checks;
        racy_disagree += e.racy_disagree;
        invariant_violations += e.invariant_violations;
        states += e.states;
    }
};

std::string kinds(const std::vector<Witness>& ws) {
    std::string r;
    for (auto& w : ws) r += (r.empty() ? "" : ",") + w.kind + "@" + w.op + ":" + std::to_string(w.line);
    return r.empty() ? "-" : r;
}

// After the witness trace, ToS points to a node whose next field is invalid.
bool top_next_invalid(const Machine& m, const Witness& w) {
    auto last = replay(m, w.trace);
    if (!last) return false;
    auto r = m.restrict_valid(last->next);
    Cell tos = kBot;
    for (auto& [n, v] : r.cells)
        if (n == "ToS") tos = v;
    if (tos < 1) return false;
    std::string field = "@" + std::to_string(tos) + ".next";
    for (auto& [n, v] : r.cells)
        if (n == field) return false;
    return true;
}

Outcome criterion1(Properties& props) {
    Outcome o;
    double worst = 0;
    for (auto& c : kTable) {
        std::string id = c.program + "/" + c.smr;
        auto t0 = std::chrono::steady_clock::now();
        auto m = ds_machine(c, ReuseMode::One);
        Exploration e = explore(*m, {workers(), 0, true});
        AbaReport ab = check_harmful_aba(*m, e);
        double t = seconds_since(t0);
        worst = std::max(worst, t);
        props.add(e);
        if (t > kDsLimit) o.fail(id + " took " + std::to_string(t) + "s");
        if (e.incomplete) o.fail(id + " incomplete: " + e.incomplete_reason);
        if (c.expect_verified) {
            if (!e.witnesses.empty() || !ab.harmful.empty()) o.fail(id + " " + kinds(e.witnesses) + " " + kinds(ab.harmful));
            continue;
        }
        // the verdict must fail in push, with the new node's next pointer invalid
        std::vector<Witness> all = e.witnesses;
        all.insert(all.end(), ab.harmful.begin(), ab.harmful.end());
        bool in_push = false;
        for (auto& w : all)
            if (w.op == "push" && top_next_invalid(*m, w)) in_push = true;
        o.note << " " << id << "=" << kinds(all);
        if (!in_push) o.fail(id + " no failure in push leaving ToS->next invalid");
    }
    o.note << " (" << kTable.size() << " configurations at 2x2x5, mode one, slowest " << worst << "s)";
    return o;
}

Outcome criterion2() {
    Outcome o;
    struct SmrCase {
        std::string program, observer;
        bool correct;
    };
    std::vector<SmrCase> cases{{"hp_impl", "hp", true},
                               {"ebr_impl", "ebr", true},
                               {"hp_impl_noscan", "hp", false},
                               {"ebr_impl_nograce", "ebr", false}};
    MgcConfig cfg;  // 2 threads, 3 calls
    for (auto& c : cases) {
        auto p = load_program(corpus("programs", c.program + ".prog"));
        auto spec = smr_observer(c.observer);
        auto t0 = std::chrono::steady_clock::now();
        SmrVerdict v = verify_smr(p, spec, cfg, {workers(), 0, true});
        double t = seconds_since(t0);
        o.note << " " << c.program << "=" << (v.correct ? "correct" : kinds(v.witnesses)) << "(" << v.states << " states, "
               << t << "s)";
        if (t > kSmrLimit) o.fail(c.program + " took too long");
        if (v.incomplete) o.fail(c.program + " incomplete");
        if (c.correct != v.correct) o.fail(c.program + " wrong verdict");
        if (!c.correct) {
            auto m = mgc_machine(p, spec, cfg);
            bool spec_violation = false;
            for (auto& w : v.witnesses) {
                std::string why;
                if (!confirm_witness(*m, w, &why)) o.fail(c.program + " witness does not replay: " + why);
                spec_violation |= w.kind == "smr-violation";
            }
            if (!spec_violation) o.fail(c.program + " no specification violation");
            if (!v.witnesses_rechecked) o.fail(c.program + " witness history not accepted on recheck");
        }
    }
    return o;
}

Outcome criterion3() {
    Outcome o;
    auto e = [](std::string k, std::vector<Value> a) { return Event{std::move(k), std::move(a)}; };
    // threads t1 = 0, t2 = 1, address a = 1
    History h1{e("protect", {0, 1, 0}), e("exit", {0}), e("retire", {1, 1}), e("exit", {1}), e("free", {1})};
    History h2{e("protect", {0, 1, 0}), e("retire", {1, 1}), e("exit", {0}), e("exit", {1}), e("free", {1})};
    Universe u;
    u.threads = {0, 1};
    u.addresses = {1, 2};
    u.integers = {0, 1};
    for (auto name : {"hp", "base*hp"}) {
        auto obs = name == std::string("hp") ? stdlib_observer("hp") : smr_observer("hp");
        bool v1 = is_violation(obs, h1, u), v2 = is_violation(obs, h2, u);
        o.note << " " << name << ": h1 " << (v1 ? "accepting" : "not accepting") << ", h2 "
               << (v2 ? "accepting" : "not accepting") << ";";
        if (!v1 || v2) o.fail(name);
    }
    return o;
}

Outcome criterion4() {
    Outcome o;
    for (auto name : {"hp", "ebr"}) {
        auto obs = smr_observer(name);
        auto t0 = std::chrono::steady_clock::now();
        auto r = check_elision_support(obs, default_elision_universe(obs), 5);
        double t = seconds_since(t0);
        o.note << " base*" << name << " " << (r.ok() ? "holds" : "fails") << " (" << r.histories << " histories, " << t
               << "s);";
        if (!r.ok()) o.fail(std::string(name) + " does not support elision");
        if (t > kElisionLimit) o.fail(std::string(name) + " took too long");
    }
    auto bad = load_observer(corpus("observers", "bad-base.obs"));
    auto r = check_elision_support(bad, default_elision_universe(bad), 3);
    o.note << " bad-base: (i) " << r.replace.holds << " (ii) " << r.fresh.holds << " (iii) " << r.free.holds;
    if (r.free.holds || r.free.witnesses.empty()) o.fail("bad-base passes property (iii)");
    else o.note << " witness " << to_string(r.free.witnesses[0].h1) << " / " << to_string(r.free.witnesses[0].h2);
    return o;
}

Outcome criterion5() {
    Outcome o;
    Bounds b;
    b.threads = 2;
    b.ops = 1;
    b.addresses = 5;
    struct Cmp {
        std::string program, smr;
        bool equal;
    };
    for (auto& c : std::vector<Cmp>{{"treiber", "hp", true},
                                    {"coarse_stack", "gc", true},
                                    {"coarse_stack", "none", true},
                                    {"aba_pair", "none", false}}) {
        auto p = select_variant(load_program(corpus("programs", c.program + ".prog")), tag_of(c.smr));
        auto r = compare_semantics(p, smr_observer(c.smr), std::nullopt, b, {}, {workers(), 0, true});
        o.note << " " << c.program << "/" << c.smr << " " << (r.equal() ? "equal" : "different") << "(" << r.full << "/"
               << r.one << ")";
        if (r.equal() != c.equal) o.fail(c.program + " comparison");
        if (!c.equal) {
            Bounds b1 = b;
            b1.mode = ReuseMode::One;
            Machine m(p, smr_observer(c.smr), std::nullopt, b1);
            auto e = explore(m, {workers(), 0, true});
            auto ab = check_harmful_aba(m, e);
            o.note << " harmful-aba " << ab.harmful.size();
            if (ab.harmful.empty()) o.fail(c.program + " harmful ABA not flagged");
        }
    }
    return o;
}

Outcome criterion6(Properties& props) {
    Outcome o;
    // (a) exact freeable inclusion against bounded continuation enumeration
    {
        std::mt19937 rng(6);
        Universe tiny;
        tiny.threads = {0};
        tiny.addresses = {1};
        tiny.integers = {0};
        Universe two = tiny;
        two.addresses = {1, 2};
        Universe small;
        small.threads = {0, 1};
        small.addresses = {1, 2};
        small.integers = {0};
        struct Setup {
            std::string obs;
            Universe u;
            int hlen, n;
        };
        std::vector<Setup> setups{{"none", small, 5, 50}, {"gc", small, 3, 30}, {"ebr", tiny, 5, 50},
                                  {"hp", tiny, 5, 40},    {"ts-mark", two, 5, 20}, {"ts-done", two, 5, 20}};
        int cases = 0, disagree = 0, separated = 0;
        for (auto& s : setups) {
            auto obs = s.obs.rfind("ts-", 0) == 0 ? stdlib_observer(s.obs) : smr_observer(s.obs);
            ObserverRuntime rt(obs, s.u);
            auto alpha = oracle::events(obs, s.u, nullptr, false);
            auto history = [&] {
                History h;
                int len = static_cast<int>(rng() % (s.hlen + 1));
                for (int i = 0; i < len; ++i) h.push_back(alpha[rng() % alpha.size()]);
                return h;
            };
            auto adrs = oracle::domain(Sort::Address, s.u);
            for (int i = 0; i < s.n; ++i) {
                History h1 = history(), h2 = history();
                Value a = adrs[rng() % adrs.size()];
                auto exact = rt.freeable_inclusion(rt.run(rt.initial(), h1), a, rt.run(rt.initial(), h2), a);
                ++cases;
                disagree += exact.included != oracle::bounded_included(obs, h1, h2, a, s.u, 6);
                separated += !exact.included;
            }
        }
        o.note << " inclusion " << cases << " cases, " << separated << " separated, " << disagree << " disagreements;";
        if (cases < 200 || disagree) o.fail("freeable inclusion oracle");
    }
    // (b)-(d) over every corpus exploration of the table, in all three modes
    for (auto& c : kTable) {
        auto one = ds_machine(c, ReuseMode::One);
        auto e1 = explore(*one, {workers(), 0, true});
        auto full = ds_machine(c, ReuseMode::Full);
        auto ef = explore(*full, {workers(), 0, true});
        auto none = ds_machine(c, ReuseMode::None);
        auto en = explore(*none, {workers(), 0, true});
        props.add(ef);
        props.add(en);
        auto cf = classes(*full, ef), c1 = classes(*one, e1), cn = classes(*none, en);
        if (includes(cf, c1) && includes(c1, cn)) ++props.monotone;
        else props.not_monotone.push_back(c.program + "/" + c.smr);
    }
    o.note << " races: " << props.enter_checks << " enter checks over " << props.runs << " runs, " << props.racy_disagree
           << " disagreements;";
    o.note << " monotone " << props.monotone << "/" << kTable.size() << ";";
    o.note << " invariants: " << props.invariant_violations << " violations over " << props.states << " states;";
    if (props.racy_disagree) o.fail("race checks disagree");
    if (props.enter_checks == 0) o.fail("no enter checks");
    if (!props.not_monotone.empty()) o.fail("not monotone: " + props.not_monotone[0]);
    if (props.invariant_violations) o.fail("invariant violations");
    // (e) worker count independence
    int same = 0, total = 0;
    for (auto& c : std::vector<DsCase>{{"treiber", "hp", "stack"},
                                       {"treiber_opt", "hp", "stack"},
                                       {"ms_queue", "ebr", "queue"},
                                       {"dglm_queue", "hp", "queue", true}}) {
        auto m = ds_machine(c, ReuseMode::One);
        auto a = explore(*m, {1, 0, true});
        auto b = explore(*m, {8, 0, true});
        auto ha = check_harmful_aba(*m, a), hb = check_harmful_aba(*m, b);
        ++total;
        same += a.store == b.store && a.via == b.via && a.parent == b.parent && a.witnesses == b.witnesses &&
                a.transitions == b.transitions && a.racy_disagree == b.racy_disagree && ha.harmful == hb.harmful;
    }
    o.note << " workers 1 vs 8 identical " << same << "/" << total;
    if (same != total) o.fail("worker count changes the exploration");
    return o;
}

}  // namespace

int main() {
    Properties props;
    std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
        {"verdicts for the data structure table", [&] { return criterion1(props); }},
        {"verdicts for the SMR implementations", criterion2},
        {"specification membership of h1 and h2", criterion3},
        {"elision support", criterion4},
        {"reduction oracle", criterion5},
        {"property suites", [&] { return criterion6(props); }},
    };
    int failed = 0;
    for (size_t i = 0; i < criteria.size(); ++i) {
        auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o.fail(std::string("exception: ") + e.what());
        }
        failed += !o.pass;
        std::cout << "criterion " << i + 1 << " " << (o.pass ? "PASS" : "FAIL") << " " << criteria[i].first << ":"
                  << o.note.str() << " [" << seconds_since(t0) << "s]" << std::endl;
    }
    return failed ? 1 : 0;
}

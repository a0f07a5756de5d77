#pragma once
// Reference implementations used only by the tests.  They share nothing with
// the library except the data types: guards are evaluated here directly, runs
// are simulated per valuation, and continuations are enumerated explicitly.

#include <functional>
#include <map>
#include <random>
#include <set>
#include <vector>

#include "smrmc/observer.hpp"

namespace oracle {

using namespace smrmc;

inline Value term_value(const Term& t, const std::vector<Value>& args, const std::vector<Value>& vars) {
    return t.is_param ? args.at(t.index) : vars.at(t.index);
}

inline bool holds(const Guard& g, const std::vector<Value>& args, const std::vector<Value>& vars) {
    switch (g.op) {
        case Guard::Op::True: return true;
        case Guard::Op::False: return false;
        case Guard::Op::Eq: return term_value(g.lhs, args, vars) == term_value(g.rhs, args, vars);
        case Guard::Op::Neq: return term_value(g.lhs, args, vars) != term_value(g.rhs, args, vars);
        case Guard::Op::Not: return !holds(g.kids[0], args, vars);
        case Guard::Op::And: {
            bool r = true;
            for (auto& k : g.kids) r = r && holds(k, args, vars);
            return r;
        }
        case Guard::Op::Or: {
            bool r = false;
            for (auto& k : g.kids) r = r || holds(k, args, vars);
            return r;
        }
    }
    return false;
}

inline std::vector<Value> domain(Sort s, const Universe& u) {
    std::vector<Value> d = s == Sort::Thread ? u.threads : s == Sort::Address ? u.addresses : u.integers;
    d.push_back(kFresh);
    return d;
}

inline std::vector<std::vector<Value>> all_valuations(const Observer& o, const Universe& u) {
    std::vector<std::vector<Value>> out;
    std::vector<Value> cur(o.vars.size());
    std::function<void(size_t)> rec = [&](size_t i) {
        if (i == o.vars.size()) {
            out.push_back(cur);
            return;
        }
        for (Value v : domain(o.vars[i].sort, u)) {
            cur[i] = v;
            rec(i + 1);
        }
    };
    rec(0);
    return out;
}

// Per-valuation location sets; "hit" records whether any run has touched an
// accepting location so far.
struct Sim {
    std::vector<std::vector<Value>> vals;
    std::vector<std::set<int>> locs;
    bool hit = false;
};

inline Sim start(const Observer& o, const Universe& u) {
    Sim s;
    s.vals = all_valuations(o, u);
    s.locs.assign(s.vals.size(), {o.initial});
    s.hit = o.accepting[o.initial];
    return s;
}

inline Sim advance(const Observer& o, const Sim& s, const Event& e) {
    Sim n = s;
    for (size_t v = 0; v < s.vals.size(); ++v) {
        std::set<int> next;
        for (int l : s.locs[v]) {
            if (o.accepting[l]) {
                next.insert(l);
                continue;
            }
            bool moved = false;
            for (auto& t : o.transitions)
                if (t.src == l && t.kind == e.kind && holds(t.guard, e.args, s.vals[v])) {
                    next.insert(t.dst);
                    moved = true;
                }
            if (!moved) next.insert(l);
        }
        for (int l : next)
            if (o.accepting[l]) n.hit = true;
        n.locs[v] = std::move(next);
    }
    return n;
}

inline bool violates(const Observer& o, const History& h, const Universe& u) {
    Sim s = start(o, u);
    for (auto& e : h) s = advance(o, s, e);
    return s.hit;
}

// All representative events with frees restricted to `freed` (if given).
inline std::vector<Event> events(const Observer& o, const Universe& u, const Value* freed, bool fresh = true) {
    std::vector<Event> out;
    for (auto& [k, sig] : o.signatures) {
        if (k == "free") {
            if (freed) out.push_back({k, {*freed}});
            else
                for (Value a : fresh ? domain(Sort::Address, u) : u.addresses) out.push_back({k, {a}});
            continue;
        }
        std::vector<Value> cur(sig.size());
        std::function<void(size_t)> rec = [&](size_t i) {
            if (i == sig.size()) {
                out.push_back({k, cur});
                return;
            }
            auto d = fresh ? domain(sig[i], u)
                           : (sig[i] == Sort::Thread ? u.threads : sig[i] == Sort::Address ? u.addresses : u.integers);
            for (Value v : d) {
                cur[i] = v;
                rec(i + 1);
            }
        };
        rec(0);
    }
    return out;
}

// Bounded check of F(h1, a) ⊆ F(h2, a): searches continuations up to `bound`.
inline bool bounded_included(const Observer& o, const History& h1, const History& h2, Value a, const Universe& u,
                             int bound) {
    auto alpha = events(o, u, &a);
    Sim s1 = start(o, u), s2 = start(o, u);
    for (auto& e : h1) s1 = advance(o, s1, e);
    for (auto& e : h2) s2 = advance(o, s2, e);
    if (s1.hit) return true;
    bool found = false;
    // pair of simulation states -> largest remaining depth already explored
    std::map<std::pair<std::vector<std::set<int>>, std::vector<std::set<int>>>, int> done;
    std::function<void(const Sim&, const Sim&, int)> dfs = [&](const Sim& x, const Sim& y, int d) {
        if (found) return;
        if (y.hit) {
            found = true;
            return;
        }
        if (d == bound) return;
        auto key = std::make_pair(x.locs, y.locs);
        auto it = done.find(key);
        if (it != done.end() && it->second >= bound - d) return;
        done[key] = bound - d;
        for (auto& e : alpha) {
            Sim nx = advance(o, x, e);
            if (nx.hit) continue;
            dfs(nx, advance(o, y, e), d + 1);
            if (found) return;
        }
    };
    dfs(s1, s2, 0);
    return !found;
}

}  // namespace oracle

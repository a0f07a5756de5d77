#include "smrmc/analysis.hpp"

#include <algorithm>
#include <deque>
#include <map>
#include <thread>
#include <tuple>
#include <unordered_map>
#include <unordered_set>

namespace smrmc {

namespace {

const char* const kStackSpec = R"(
observer stack;
vars { x1: integer; x2: integer; }
locations { I initial; A; B; C; BAD accepting; }
transitions {
  I --push(v: integer) [v == x1]--> A;
  I --pop(v: integer) [v == x1]--> BAD;
  A --pop(v) [v == x1]--> C;
  A --push(v) [v == x2]--> B;
  A --pop_empty() [true]--> BAD;
  B --pop_empty() [true]--> BAD;
  B --pop(v) [v == x1]--> BAD;
  B --pop(v) [v == x2]--> A;
  C --pop(v) [v == x1]--> BAD;
}
)";

const char* const kQueueSpec = R"(
observer queue;
vars { x1: integer; x2: integer; }
locations { I initial; A; B; C; BAD accepting; }
transitions {
  I --enqueue(v: integer) [v == x1]--> A;
  I --dequeue(v: integer) [v == x1]--> BAD;
  A --dequeue(v) [v == x1]--> C;
  A --enqueue(v) [v == x2]--> B;
  A --dequeue_empty() [true]--> BAD;
  B --dequeue_empty() [true]--> BAD;
  B --dequeue(v) [v == x2]--> BAD;
  B --dequeue(v) [v == x1]--> C;
  C --dequeue(v) [v == x1]--> BAD;
}
)";

// Hash set of state ids whose keys live in the exploration store.
struct StoreHash {
    const std::vector<State>* store;
    size_t operator()(uint32_t i) const { return std::hash<State>{}((*store)[i]); }
};
struct StoreEq {
    const std::vector<State>* store;
    bool operator()(uint32_t a, uint32_t b) const { return (*store)[a] == (*store)[b]; }
};

template <class F>
void parallel_for(size_t n, int workers, F f) {
    if (workers <= 1 || n < 64) {
        for (size_t i = 0; i < n; ++i) f(i);
        return;
    }
    std::vector<std::thread> pool;
    size_t w = static_cast<size_t>(workers);
    for (size_t k = 0; k < w; ++k)
        pool.emplace_back([&, k] {
            for (size_t i = k; i < n; i += w) f(i);
        });
    for (auto& t : pool) t.join();
}

}  // namespace

Observer spec_observer(const std::string& kind) {
    if (kind == "stack") return parse_observer(kStackSpec);
    if (kind == "queue") return parse_observer(kQueueSpec);
    throw std::runtime_error("unknown specification '" + kind + "' (expected stack or queue)");
}

std::vector<Action> Exploration::trace_to(uint32_t state) const {
    std::vector<Action> out;
    while (parent[state] != state) {
        out.push_back(via[state]);
        state = parent[state];
    }
    out.push_back(via[state]);  // Init action of the root
    std::reverse(out.begin(), out.end());
    return out;
}

std::optional<Step> replay(const Machine& m, const std::vector<Action>& trace, History* history) {
    Step last;
    size_t i = 0;
    if (!trace.empty() && trace[0].kind == Action::Kind::Init) {
        auto roots = m.initial_states();
        if (trace[0].choice < 0 || static_cast<size_t>(trace[0].choice) >= roots.size()) return std::nullopt;
        last.next = roots[trace[0].choice];
        last.action = trace[0];
        i = 1;
    } else {
        last.next = m.initial();
    }
    for (; i < trace.size(); ++i) {
        const Action& a = trace[i];
        auto st = m.apply(last.next, a);
        if (!st) return std::nullopt;
        if (history) history->insert(history->end(), st->events.begin(), st->events.end());
        last = std::move(*st);
    }
    return last;
}

Exploration explore(const Machine& m, const ExploreOptions& o) {
    Exploration e;
    std::unordered_set<uint32_t, StoreHash, StoreEq> index(1024, StoreHash{&e.store}, StoreEq{&e.store});
    std::set<std::tuple<std::string, std::string, int>> reported;
    auto witness = [&](std::string kind, std::string detail, std::string op, int line, std::vector<Action> trace) {
        if (!reported.insert({kind, op, line}).second) return;
        Witness w;
        w.kind = std::move(kind);
        w.detail = std::move(detail);
        w.op = std::move(op);
        w.line = line;
        w.trace = std::move(trace);
        e.witnesses.push_back(std::move(w));
    };
    auto check = [&](uint32_t id) {
        if (!o.check_invariants) return;
        for (auto& name : m.check_invariants(e.store[id])) {
            ++e.invariant_violations;
            witness("invariant:" + name, "state invariant '" + name + "' violated", "", 0, e.trace_to(id));
        }
    };

    std::vector<uint32_t> frontier;
    auto roots = m.initial_states();
    for (size_t r = 0; r < roots.size(); ++r) {
        auto id = static_cast<uint32_t>(e.store.size());
        e.store.push_back(std::move(roots[r]));
        if (!index.insert(id).second) {
            e.store.pop_back();
            continue;
        }
        e.parent.push_back(id);
        e.via.push_back({Action::Kind::Init, -1, static_cast<int>(r)});
        frontier.push_back(id);
        check(id);
    }
    int workers = std::max(1, o.workers);
    while (!frontier.empty()) {
        if (o.max_states && e.store.size() >= o.max_states) {
            e.incomplete = true;
            e.incomplete_reason = "state limit reached";
            e.frontier = frontier.size();
            break;
        }
        std::vector<uint32_t> next;
        // successors are computed in chunks to bound the memory of pending steps
        constexpr size_t kChunk = 4096;
        std::vector<std::vector<Step>> succ;
        for (size_t i = 0; i < frontier.size(); ++i) {
            if (i % kChunk == 0) {
                size_t n = std::min(kChunk, frontier.size() - i);
                succ.assign(n, {});
                parallel_for(n, workers, [&](size_t j) { succ[j] = m.successors(e.store[frontier[i + j]]); });
            }
            uint32_t src = frontier[i];
            if (succ[i % kChunk].empty()) {
                for (int t = 0; t < m.bounds().threads; ++t)
                    if (m.pc(e.store[src], t) >= 0) {
                        ++e.stuck;
                        break;
                    }
            }
            for (auto& st : succ[i % kChunk]) {
                ++e.transitions;
                if (st.racy_exact >= 0 && st.racy_fast >= 0) {
                    ++e.enter_checks;
                    if (st.racy_exact != st.racy_fast) ++e.racy_disagree;
                }
                if (st.fault == Fault::Exhausted) {
                    ++e.exhausted;
                    e.incomplete = true;
                    e.incomplete_reason = "address bound exhausted";
                    continue;
                }
                if (st.fault != Fault::None) {
                    auto trace = e.trace_to(src);
                    trace.push_back(st.action);
                    witness(fault_name(st.fault), st.detail, st.op, st.line, std::move(trace));
                    continue;
                }
                if (st.aba_prone) {
                    ++e.aba_prone;
                    e.aba_sites.push_back({src, st.action, st.pc, st.op, st.line});
                }
                if (!m.admissible(st.next)) continue;
                auto id = static_cast<uint32_t>(e.store.size());
                e.store.push_back(std::move(st.next));
                if (!index.insert(id).second) {
                    e.store.pop_back();
                    continue;
                }
                e.parent.push_back(src);
                e.via.push_back(st.action);
                next.push_back(id);
                check(id);
            }
        }
        frontier = std::move(next);
    }
    e.states = e.store.size();
    for (auto& w : e.witnesses) replay(m, w.trace, &w.history);
    return e;
}

bool confirm_witness(const Machine& m, const Witness& w, std::string* why) {
    auto fail = [&](std::string msg) {
        if (why) *why = std::move(msg);
        return false;
    };
    History h;
    auto last = replay(m, w.trace, &h);
    if (!last) return fail("trace is not executable");
    if (h != w.history) return fail("induced history differs");
    if (w.kind == "harmful-aba") {
        if (!last->aba_prone) return fail("last step is not an ABA");
    } else if (w.kind.rfind("invariant:", 0) == 0) {
        auto bad = m.check_invariants(last->next);
        if (std::find(bad.begin(), bad.end(), w.kind.substr(10)) == bad.end()) return fail("invariant holds");
    } else if (fault_name(last->fault) != w.kind) {
        return fail(std::string("last step has fault ") + fault_name(last->fault));
    }
    return true;
}

std::set<std::string> control_states(const Machine& m, const Exploration& e) {
    std::set<std::string> out;
    for (auto& s : e.store) out.insert(m.control_key(s));
    return out;
}

namespace {

Value with_label(const std::vector<int>& labels, int label) {
    for (size_t a = 0; a < labels.size(); ++a)
        if (labels[a] == label && label >= 0) return static_cast<Value>(a);
    return -1;
}

}  // namespace

AbaReport check_harmful_aba(const Machine& m, const Exploration& e, int replay_factor) {
    AbaReport r;
    if (e.aba_sites.empty()) return r;
    const Value star = m.bounds().reusable;
    const int A = m.bounds().addresses;
    std::vector<std::string> keys(e.store.size());
    std::vector<std::vector<int>> labels(e.store.size());
    for (size_t i = 0; i < e.store.size(); ++i) keys[i] = m.similarity_key(e.store[i], &labels[i]);
    std::unordered_map<std::string, std::vector<uint32_t>> buckets;
    for (size_t i = 0; i < e.store.size(); ++i) buckets[keys[i]].push_back(static_cast<uint32_t>(i));

    // sequential replays of one thread, memoized per (state, action)
    std::map<std::pair<uint32_t, Action>, std::vector<State>> memo;
    auto replays = [&](uint32_t cand, const Action& act, int pc) -> const std::vector<State>& {
        auto key = std::make_pair(cand, act);
        if (auto it = memo.find(key); it != memo.end()) return it->second;
        std::vector<State>& out = memo[key];
        const State& s0 = e.store[cand];
        int t = act.thread;
        int op = m.op(s0, t);
        int bound = replay_factor * std::max(1, m.op_statements(op));
        std::unordered_set<State> seen{s0};
        std::deque<std::pair<State, int>> queue{{s0, 0}};
        while (!queue.empty()) {
            auto [s, d] = queue.front();
            queue.pop_front();
            if (d > 0 && m.op(s, t) == op && m.pc(s, t) == pc)
                if (auto st = m.apply(s, act); st && st->fault == Fault::None) out.push_back(st->next);
            if (d == bound) continue;
            for (auto& st : m.thread_successors(s, t)) {
                if (st.fault != Fault::None || st.action.kind == Action::Kind::Start) continue;
                if (seen.insert(st.next).second) queue.push_back({std::move(st.next), d + 1});
            }
        }
        return out;
    };

    std::set<std::pair<std::string, int>> reported;
    for (auto& site : e.aba_sites) {
        ++r.sites;
        const State& sa = e.store[site.state];
        auto after = m.apply(sa, site.action);
        if (!after) continue;
        const State& sa2 = after->next;
        const auto& la = labels[site.state];
        std::vector<Cell> pa = m.pointer_variables(sa);
        std::vector<Value> img = m.valid_image(sa);
        bool covered_all = true;
        std::string failure;
        for (uint32_t cand : buckets[keys[site.state]]) {
            if (cand == site.state) continue;
            const State& s = e.store[cand];
            if (m.apply(s, site.action)) continue;
            ++r.candidates;
            const auto& lc = labels[cand];
            // image b of the reusable address under the renaming between the two states
            Value b = -1;
            if (la[star] >= 0) {
                b = with_label(lc, la[star]);
            } else {
                for (Value x = 1; x <= A && b < 0; ++x)
                    if (lc[x] < 0) b = x;
            }
            bool same = b == star, excluded = false;
            auto frame = [&](bool held_a, bool held) {
                if (same ? held_a != held : held_a && held) excluded = true;
            };
            std::vector<Cell> pc = m.pointer_variables(s);
            for (size_t i = 0; i < pa.size() && i < pc.size(); ++i) frame(pa[i] == star, pc[i] == star);
            for (Value c : img) {
                Value x = with_label(lc, la[c]);
                if (x < 0) continue;
                for (int sel : m.pointer_selectors()) frame(m.selector(sa, c, sel) == star, m.selector(s, x, sel) == star);
            }
            if (excluded) {
                ++r.trivial;
                continue;
            }
            std::vector<int> l1;
            std::string k1 = m.marked_key(sa2, star, &l1);
            bool ok = false;
            for (auto& s2 : replays(cand, site.action, site.pc)) {
                std::vector<int> l2;
                if (m.marked_key(s2, b, &l2) != k1) continue;
                if (!m.mem_equiv(s, s2, star)) continue;
                bool incl = true;
                for (Value c : m.restriction_addresses(sa2)) {
                    Value rc = with_label(l2, l1[c]);
                    if (rc < 0 ||
                        !m.smr_runtime().freeable_inclusion(m.smr_config(sa2), c, m.smr_config(s2), rc).included) {
                        incl = false;
                        break;
                    }
                }
                if (incl) {
                    ok = true;
                    break;
                }
            }
            if (ok) {
                ++r.replays;
            } else {
                covered_all = false;
                failure = m.describe(s);
                break;
            }
        }
        if (!covered_all && reported.insert({site.op, site.line}).second) {
            Witness w;
            w.kind = "harmful-aba";
            w.detail = "ABA at " + m.describe(site.action, sa) +
                       " is not covered by a sequential replay from the similar state\n" + failure;
            w.op = site.op;
            w.line = site.line;
            w.trace = e.trace_to(site.state);
            w.trace.push_back(site.action);
            replay(m, w.trace, &w.history);
            r.harmful.push_back(std::move(w));
        }
    }
    return r;
}

SemanticsComparison compare_semantics(const Program& p, const Observer& smr, std::optional<Observer> lin, Bounds b,
                                      MachineOptions mo, ExploreOptions eo) {
    SemanticsComparison r;
    std::map<std::string, std::string> sides[2];
    for (int i = 0; i < 2; ++i) {
        Bounds bi = b;
        bi.mode = i == 0 ? ReuseMode::Full : ReuseMode::One;
        Machine m(p, smr, lin, bi, mo);
        Exploration e = explore(m, eo);
        if (e.incomplete) r.incomplete = true;
        for (auto& s : e.store) {
            auto k = m.similarity_key(s);
            if (!sides[i].count(k)) sides[i][k] = m.describe(s);
        }
    }
    r.full = sides[0].size();
    r.one = sides[1].size();
    for (auto& [k, d] : sides[0])
        if (!sides[1].count(k)) {
            if (r.example.empty()) r.example = "reachable with full reuse only:\n" + d;
            ++r.only_full;
        }
    for (auto& [k, d] : sides[1])
        if (!sides[0].count(k)) {
            if (r.example.empty()) r.example = "reachable with a single reusable address only:\n" + d;
            ++r.only_one;
        }
    return r;
}

}  // namespace smrmc

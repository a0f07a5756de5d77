#include "smrmc/freeable.hpp"

#include <algorithm>
#include <deque>
#include <map>
#include <set>
#include <unordered_map>

namespace smrmc {

bool freeable_contains(const Observer& o, const History& h, Value a, const History& cont, const Universe& u) {
    for (auto& e : cont)
        if (e.kind == "free" && e.args.at(0) != a) return false;
    History full = h;
    full.insert(full.end(), cont.begin(), cont.end());
    return !is_violation(o, full, u);
}

ObserverRuntime::Inclusion freeable_inclusion(const Observer& o, const History& h1, Value a1, const History& h2,
                                              Value a2, const Universe& u) {
    ObserverRuntime rt(o, u);
    ConfigId c1 = rt.run(rt.initial(), h1);
    ConfigId c2 = rt.run(rt.initial(), h2);
    return rt.freeable_inclusion(c1, a1, c2, a2);
}

Universe default_elision_universe(const Observer&) {
    Universe u;
    u.threads = {0, 1};
    u.addresses = {1, 2, 3};
    u.integers = {0};
    return u;
}

namespace {

enum : uint8_t { kNever = 0, kFreedLast = 1, kUsed = 2 };

struct Node {
    ConfigId config;
    std::vector<uint8_t> status;  // per universe address
    int parent;
    Event via;
};

constexpr size_t kMaxWitnesses = 3;

}  // namespace

ElisionReport check_elision_support(const Observer& o, const Universe& u, int bound) {
    ObserverRuntime rt(o, u);
    ElisionReport rep;
    rep.observer = o.name;
    rep.bound = bound;
    rep.replace.name = "replace";
    rep.fresh.name = "fresh";
    rep.free.name = "free";

    const auto& adrs = u.addresses;
    std::vector<Value> adrs_f = u.with_fresh(Sort::Address);
    auto adr_pos = [&](Value a) { return static_cast<size_t>(std::find(adrs.begin(), adrs.end(), a) - adrs.begin()); };

    // history alphabet: universe values only
    std::vector<Event> alpha;
    for (auto& [k, sig] : rt.observer().signatures) {
        std::vector<std::vector<Value>> tuples{{}};
        for (Sort s : sig) {
            std::vector<std::vector<Value>> next;
            for (auto& p : tuples)
                for (Value x : u.of(s)) {
                    auto q = p;
                    q.push_back(x);
                    next.push_back(std::move(q));
                }
            tuples = std::move(next);
        }
        for (auto& t : tuples) alpha.push_back({k, t});
    }
    const Signatures& sigs = rt.observer().signatures;

    std::vector<Node> nodes;
    std::map<std::pair<ConfigId, std::vector<uint8_t>>, int> seen;
    std::vector<int> depth;
    auto add = [&](ConfigId c, std::vector<uint8_t> st, int parent, const Event& via, int d) {
        auto key = std::make_pair(c, st);
        if (seen.count(key)) return;
        seen.emplace(key, static_cast<int>(nodes.size()));
        nodes.push_back({c, std::move(st), parent, via});
        depth.push_back(d);
    };
    add(rt.initial(), std::vector<uint8_t>(adrs.size(), kNever), -1, {}, 0);
    for (size_t i = 0; i < nodes.size(); ++i) {
        if (depth[i] >= bound) continue;
        if (rt.accepting(nodes[i].config)) continue;  // F is empty from here on
        for (auto& e : alpha) {
            ConfigId c = rt.step(nodes[i].config, e);
            auto st = nodes[i].status;
            auto sig = sigs.find(e.kind);
            for (size_t j = 0; j < e.args.size(); ++j) {
                bool adr = e.kind == "free" || (sig != sigs.end() && sig->second[j] == Sort::Address);
                if (!adr) continue;
                size_t p = adr_pos(e.args[j]);
                if (p < adrs.size()) st[p] = e.kind == "free" ? kFreedLast : kUsed;
            }
            add(c, std::move(st), static_cast<int>(i), e, depth[i] + 1);
        }
    }
    rep.histories = nodes.size();

    auto history_of = [&](int i) {
        History h;
        for (; nodes[i].parent >= 0; i = nodes[i].parent) h.push_back(nodes[i].via);
        std::reverse(h.begin(), h.end());
        return h;
    };
    auto equal_f = [&](ConfigId x, ConfigId y, Value c, History& cont) {
        auto r = rt.freeable_inclusion(x, c, y, c);
        if (!r.included) {
            cont = r.counterexample;
            return false;
        }
        r = rt.freeable_inclusion(y, c, x, c);
        if (!r.included) {
            cont = r.counterexample;
            return false;
        }
        return true;
    };
    auto live_equal = [&](ConfigId x, ConfigId y, Value c) { return rt.live(x, c) == rt.live(y, c); };

    // free
    for (size_t i = 0; i < nodes.size(); ++i) {
        ConfigId c = nodes[i].config;
        if (rt.accepting(c)) continue;
        for (Value a : adrs) {
            ConfigId d = rt.step(c, Event{"free", {a}});
            if (rt.accepting(d)) continue;
            for (Value b : adrs_f) {
                if (b == a) continue;
                ++rep.free.checks;
                if (live_equal(c, d, b)) continue;
                History cont;
                if (equal_f(d, c, b, cont)) continue;
                rep.free.holds = false;
                if (rep.free.witnesses.size() < kMaxWitnesses) {
                    ElisionWitness w;
                    w.h1 = history_of(static_cast<int>(i));
                    w.h1.push_back({"free", {a}});
                    w.h2 = history_of(static_cast<int>(i));
                    w.a = a;
                    w.b = b;
                    w.continuation = cont;
                    rep.free.witnesses.push_back(w);
                }
            }
        }
    }

    // replace
    for (size_t i = 0; i < nodes.size(); ++i) {
        ConfigId c = nodes[i].config;
        if (rt.accepting(c)) continue;
        for (size_t x = 0; x < adrs.size(); ++x)
            for (size_t y = x + 1; y < adrs.size(); ++y) {
                Value a = adrs[x], b = adrs[y];
                ConfigId d = rt.swap(c, a, b);
                for (Value cc : adrs_f) {
                    if (cc == a || cc == b) continue;
                    ++rep.replace.checks;
                    if (live_equal(c, d, cc)) continue;
                    History cont;
                    if (equal_f(c, d, cc, cont)) continue;
                    rep.replace.holds = false;
                    if (rep.replace.witnesses.size() < kMaxWitnesses) {
                        ElisionWitness w;
                        w.h1 = history_of(static_cast<int>(i));
                        w.h2 = replace_address(w.h1, a, b, sigs);
                        w.a = a;
                        w.b = b;
                        w.c = cc;
                        w.continuation = cont;
                        rep.replace.witnesses.push_back(w);
                    }
                }
            }
    }

    // fresh: group nodes into classes by live configurations and status
    struct Class {
        std::vector<ConfigId> live;  // per adrs_f entry
        std::vector<uint8_t> status;
        int rep;
    };
    std::vector<Class> classes;
    {
        std::map<std::pair<std::vector<ConfigId>, std::vector<uint8_t>>, int> idx;
        for (size_t i = 0; i < nodes.size(); ++i) {
            if (rt.accepting(nodes[i].config)) continue;
            std::vector<ConfigId> lv;
            for (Value a : adrs_f) lv.push_back(rt.live(nodes[i].config, a));
            auto key = std::make_pair(lv, nodes[i].status);
            if (idx.count(key)) continue;
            idx.emplace(key, static_cast<int>(classes.size()));
            classes.push_back({lv, nodes[i].status, static_cast<int>(i)});
        }
    }
    auto status_of = [&](const Class& k, size_t bi) -> uint8_t {
        return bi < adrs.size() ? k.status[bi] : static_cast<uint8_t>(kNever);  // the fresh representative never occurs
    };
    std::map<std::tuple<ConfigId, ConfigId, Value>, bool> incl;
    auto included = [&](ConfigId x, ConfigId y, Value a) {
        if (x == y) return true;
        auto key = std::make_tuple(x, y, a);
        auto it = incl.find(key);
        if (it != incl.end()) return it->second;
        bool r = rt.freeable_inclusion(x, a, y, a).included;
        incl.emplace(key, r);
        return r;
    };
    for (size_t bi = 0; bi < adrs_f.size(); ++bi) {
        Value b = adrs_f[bi];
        // distinct live configurations for b on each side
        std::map<ConfigId, std::vector<int>> left, right;
        for (size_t k = 0; k < classes.size(); ++k) {
            uint8_t s = status_of(classes[k], bi);
            if (s == kNever || s == kFreedLast) left[classes[k].live[bi]].push_back(static_cast<int>(k));
            if (s == kNever) right[classes[k].live[bi]].push_back(static_cast<int>(k));
        }
        for (auto& [lx, ks1] : left)
            for (auto& [ly, ks2] : right) {
                ++rep.fresh.checks;
                if (included(lx, ly, b)) continue;
                // conclusion fails; look for a pair where the premise holds
                for (int k1 : ks1)
                    for (int k2 : ks2)
                        for (size_t ai = 0; ai < adrs_f.size(); ++ai) {
                            if (ai == bi) continue;
                            Value a = adrs_f[ai];
                            if (!included(classes[k1].live[ai], classes[k2].live[ai], a)) continue;
                            rep.fresh.holds = false;
                            if (rep.fresh.witnesses.size() < kMaxWitnesses) {
                                ElisionWitness w;
                                w.h1 = history_of(classes[k1].rep);
                                w.h2 = history_of(classes[k2].rep);
                                w.a = a;
                                w.b = b;
                                w.continuation = rt.freeable_inclusion(lx, b, ly, b).counterexample;
                                rep.fresh.witnesses.push_back(w);
                            }
                            goto next_pair;
                        }
            next_pair:;
            }
    }
    return rep;
}

}  // namespace smrmc

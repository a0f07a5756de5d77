#include "smrmc/runtime.hpp"

#include <algorithm>
#include <deque>
#include <set>

namespace smrmc {

using Lock = std::lock_guard<std::recursive_mutex>;

size_t ObserverRuntime::Hash::operator()(const std::vector<uint32_t>& v) const {
    uint64_t h = 1469598103934665603ull;
    for (uint32_t x : v) {
        h ^= x;
        h *= 1099511628211ull;
    }
    return static_cast<size_t>(h ^ (h >> 29));
}

ObserverRuntime::ObserverRuntime(Observer o, Universe u) : obs_(std::move(o)), uni_(std::move(u)) {
    obs_.validate();
    vals_ = valuations(obs_, uni_);
    if (vals_.size() >= (1u << 24)) throw ObserverError("too many valuations for observer '" + obs_.name + "'");
    for (auto& v : obs_.vars) sort_values_.push_back(uni_.with_fresh(v.sort));
    for (auto& [k, s] : obs_.signatures) kinds_.push_back(k);
    trans_.assign(obs_.locations.size(), std::vector<std::vector<std::pair<const Guard*, int>>>(kinds_.size()));
    for (auto& t : obs_.transitions) trans_[t.src][kind_id(t.kind)].emplace_back(&t.guard, t.dst);
    std::vector<uint32_t> init;
    for (uint32_t i = 0; i < vals_.size(); ++i) init.push_back(i << 8 | static_cast<uint32_t>(obs_.initial));
    initial_ = intern(std::move(init));
}

int ObserverRuntime::kind_id(const std::string& k) const {
    auto it = std::lower_bound(kinds_.begin(), kinds_.end(), k);
    if (it == kinds_.end() || *it != k) return -1;
    return static_cast<int>(it - kinds_.begin());
}

size_t ObserverRuntime::val_index(const std::vector<Value>& v) const {
    size_t idx = 0;
    for (size_t i = 0; i < v.size(); ++i) {
        auto& dom = sort_values_[i];
        auto it = std::find(dom.begin(), dom.end(), v[i]);
        if (it == dom.end()) throw ObserverError("value outside of the observer universe");
        idx = idx * dom.size() + static_cast<size_t>(it - dom.begin());
    }
    return idx;
}

ConfigId ObserverRuntime::intern_locked(std::vector<uint32_t>&& s) {
    auto it = config_ids_.find(s);
    if (it != config_ids_.end()) return it->second;
    auto id = static_cast<ConfigId>(configs_.size());
    bool acc = false;
    for (uint32_t x : s)
        if (obs_.accepting[x & 0xff]) acc = true;
    configs_.push_back(s);
    config_acc_.push_back(acc);
    config_ids_.emplace(std::move(s), id);
    return id;
}

ConfigId ObserverRuntime::intern(std::vector<uint32_t> states) {
    std::sort(states.begin(), states.end());
    states.erase(std::unique(states.begin(), states.end()), states.end());
    Lock l(mu_);
    return intern_locked(std::move(states));
}

std::vector<uint32_t> ObserverRuntime::states(ConfigId c) const {
    Lock l(mu_);
    return configs_.at(c);
}

bool ObserverRuntime::accepting(ConfigId c) const {
    Lock l(mu_);
    return config_acc_.at(c) != 0;
}

size_t ObserverRuntime::config_count() const {
    Lock l(mu_);
    return configs_.size();
}

EventId ObserverRuntime::event_id(const Event& e) {
    std::string key = to_string(e);
    Lock l(mu_);
    auto it = event_ids_.find(key);
    if (it != event_ids_.end()) return it->second;
    int k = kind_id(e.kind);
    if (k >= 0 && obs_.signatures.at(e.kind).size() != e.args.size())
        throw ObserverError("event " + key + " does not match the arity of '" + e.kind + "'");
    auto id = static_cast<EventId>(events_.size());
    events_.push_back(e);
    event_ids_.emplace(std::move(key), id);
    return id;
}

Event ObserverRuntime::event(EventId e) const {
    Lock l(mu_);
    return events_.at(e);
}

ConfigId ObserverRuntime::step(ConfigId c, EventId eid) {
    Lock l(mu_);
    uint64_t key = static_cast<uint64_t>(c) << 32 | eid;
    auto it = step_memo_.find(key);
    if (it != step_memo_.end()) return it->second;
    const Event& e = events_.at(eid);
    int k = kind_id(e.kind);
    ConfigId out = c;
    if (k >= 0) {
        const auto& cur = configs_.at(c);
        std::vector<uint32_t> next;
        next.reserve(cur.size());
        for (uint32_t s : cur) {
            uint32_t val = s >> 8;
            int loc = static_cast<int>(s & 0xff);
            if (obs_.accepting[loc]) {
                next.push_back(s);
                continue;
            }
            bool moved = false;
            for (auto& [g, dst] : trans_[loc][k]) {
                if (g->eval(e.args.data(), vals_[val].data())) {
                    next.push_back(val << 8 | static_cast<uint32_t>(dst));
                    moved = true;
                }
            }
            if (!moved) next.push_back(s);
        }
        std::sort(next.begin(), next.end());
        next.erase(std::unique(next.begin(), next.end()), next.end());
        out = intern_locked(std::move(next));
    }
    step_memo_.emplace(key, out);
    return out;
}

ConfigId ObserverRuntime::run(ConfigId c, const History& h) {
    for (auto& e : h) c = step(c, e);
    return c;
}

ConfigId ObserverRuntime::remap(ConfigId c, const std::vector<std::pair<Value, Value>>& m) {
    std::string key = std::to_string(c);
    for (auto& [x, y] : m)
        if (x != y) key += "," + std::to_string(x) + ">" + std::to_string(y);
    Lock l(mu_);
    auto it = rename_memo_.find(key);
    if (it != rename_memo_.end()) return it->second;
    auto map = [&](Value v) {
        for (auto& [x, y] : m)
            if (x == v) return y;
        return v;
    };
    std::vector<uint32_t> out;
    const auto cur = configs_.at(c);
    for (uint32_t s : cur) {
        std::vector<Value> v = vals_[s >> 8];
        for (size_t i = 0; i < v.size(); ++i)
            if (obs_.vars[i].sort == Sort::Address) v[i] = map(v[i]);
        out.push_back(static_cast<uint32_t>(val_index(v)) << 8 | (s & 0xff));
    }
    std::sort(out.begin(), out.end());
    ConfigId id = intern_locked(std::move(out));
    rename_memo_.emplace(key, id);
    return id;
}

ConfigId ObserverRuntime::rename(ConfigId c, const std::vector<Value>& perm) {
    std::vector<std::pair<Value, Value>> m;
    for (size_t i = 0; i < perm.size() && i < uni_.addresses.size(); ++i) m.emplace_back(uni_.addresses[i], perm[i]);
    return remap(c, m);
}

ConfigId ObserverRuntime::swap(ConfigId c, Value a, Value b) {
    if (a == b) return c;
    return remap(c, {{a, b}, {b, a}});
}

const std::vector<EventId>& ObserverRuntime::alphabet(Value a) {
    Lock l(mu_);
    auto it = alphabets_.find(a);
    if (it != alphabets_.end()) return it->second;
    std::vector<EventId> out;
    for (auto& [k, sig] : obs_.signatures) {
        if (k == "free") {
            out.push_back(event_id({k, {a}}));
            continue;
        }
        std::vector<std::vector<Value>> tuples{{}};
        for (Sort s : sig) {
            std::vector<std::vector<Value>> next;
            for (auto& p : tuples)
                for (Value x : uni_.with_fresh(s)) {
                    auto q = p;
                    q.push_back(x);
                    next.push_back(std::move(q));
                }
            tuples = std::move(next);
        }
        for (auto& t : tuples) out.push_back(event_id({k, t}));
    }
    return alphabets_.emplace(a, std::move(out)).first->second;
}

std::vector<uint32_t> ObserverRuntime::live_locations(uint32_t val, Value a) {
    uint64_t key = static_cast<uint64_t>(val) << 32 | static_cast<uint32_t>(a);
    auto it = live_locs_.find(key);
    if (it != live_locs_.end()) return it->second;
    size_t n = obs_.locations.size();
    std::vector<std::vector<int>> pred(n);
    for (EventId eid : alphabet(a)) {
        const Event& e = events_[eid];
        int k = kind_id(e.kind);
        if (k < 0) continue;
        for (size_t loc = 0; loc < n; ++loc) {
            if (obs_.accepting[loc]) continue;
            for (auto& [g, dst] : trans_[loc][k])
                if (g->eval(e.args.data(), vals_[val].data())) pred[dst].push_back(static_cast<int>(loc));
        }
    }
    std::vector<uint32_t> live(n, 0);
    std::vector<int> work;
    for (size_t loc = 0; loc < n; ++loc)
        if (obs_.accepting[loc]) {
            live[loc] = 1;
            work.push_back(static_cast<int>(loc));
        }
    while (!work.empty()) {
        int x = work.back();
        work.pop_back();
        for (int p : pred[x])
            if (!live[p]) {
                live[p] = 1;
                work.push_back(p);
            }
    }
    live_locs_.emplace(key, live);
    return live;
}

ConfigId ObserverRuntime::live(ConfigId c, Value a) {
    Lock l(mu_);
    uint64_t key = static_cast<uint64_t>(c) << 32 | static_cast<uint32_t>(a);
    auto it = live_memo_.find(key);
    if (it != live_memo_.end()) return it->second;
    std::vector<uint32_t> out;
    const auto cur = configs_.at(c);
    for (uint32_t s : cur)
        if (live_locations(s >> 8, a)[s & 0xff]) out.push_back(s);
    ConfigId id = intern_locked(std::move(out));
    live_memo_.emplace(key, id);
    return id;
}

std::vector<int> ObserverRuntime::step_locations(uint32_t val, const std::vector<int>& locs, EventId eid) {
    const Event& e = events_[eid];
    int k = kind_id(e.kind);
    if (k < 0) return locs;
    std::vector<int> out;
    for (int loc : locs) {
        bool moved = false;
        if (!obs_.accepting[loc])
            for (auto& [g, dst] : trans_[loc][k])
                if (g->eval(e.args.data(), vals_[val].data())) {
                    out.push_back(dst);
                    moved = true;
                }
        if (!moved) out.push_back(loc);
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

bool ObserverRuntime::location_included(uint32_t val, int l1, int l2, Value a) {
    if (l1 == l2) return true;
    uint64_t key = static_cast<uint64_t>(val) << 32 | static_cast<uint64_t>(l1) << 24 | static_cast<uint64_t>(l2) << 16 |
                   static_cast<uint16_t>(a);
    auto it = loc_incl_memo_.find(key);
    if (it != loc_incl_memo_.end()) return it->second;
    auto acc = [&](const std::vector<int>& ls) {
        for (int l : ls)
            if (obs_.accepting[l]) return true;
        return false;
    };
    // subset construction over the single valuation
    std::set<std::pair<std::vector<int>, std::vector<int>>> seen;
    std::deque<std::pair<std::vector<int>, std::vector<int>>> work;
    work.push_back({{l1}, {l2}});
    seen.insert(work.back());
    bool r = true;
    while (r && !work.empty()) {
        auto [p, q] = work.front();
        work.pop_front();
        for (EventId e : alphabet(a)) {
            auto p2 = step_locations(val, p, e);
            if (acc(p2)) continue;
            auto q2 = step_locations(val, q, e);
            if (acc(q2)) {
                r = false;
                break;
            }
            if (seen.insert({p2, q2}).second) work.push_back({std::move(p2), std::move(q2)});
        }
    }
    loc_incl_memo_.emplace(key, r);
    return r;
}

bool ObserverRuntime::config_below(ConfigId c1, ConfigId c2, Value a) {
    // F(c1) is contained in F(c2) if every constraint of c2 is implied by one of c1
    const auto& x = configs_.at(c1);
    const auto& y = configs_.at(c2);
    size_t i = 0;
    for (uint32_t s : y) {
        uint32_t val = s >> 8;
        while (i < x.size() && (x[i] >> 8) < val) ++i;
        bool ok = false;
        for (size_t j = i; j < x.size() && (x[j] >> 8) == val && !ok; ++j)
            ok = location_included(val, static_cast<int>(x[j] & 0xff), static_cast<int>(s & 0xff), a);
        if (!ok) return false;
    }
    return true;
}

// Drops from d the valuations on which it agrees with x.  Per valuation both
// configurations evolve alike from then on, so only the rest can separate them.
ConfigId ObserverRuntime::difference(ConfigId x, ConfigId d) {
    const auto& xs = configs_.at(x);
    const auto& ds = configs_.at(d);
    auto group = [](const std::vector<uint32_t>& v, size_t i) {
        size_t j = i;
        while (j < v.size() && (v[j] >> 8) == (v[i] >> 8)) ++j;
        return j;
    };
    std::vector<uint32_t> out;
    size_t i = 0;
    for (size_t j = 0; j < ds.size();) {
        size_t je = group(ds, j);
        uint32_t val = ds[j] >> 8;
        while (i < xs.size() && (xs[i] >> 8) < val) ++i;
        size_t ie = i < xs.size() && (xs[i] >> 8) == val ? group(xs, i) : i;
        if (!std::equal(ds.begin() + j, ds.begin() + je, xs.begin() + i, xs.begin() + ie))
            out.insert(out.end(), ds.begin() + j, ds.begin() + je);
        j = je;
    }
    if (out.size() == ds.size()) return d;
    return intern_locked(std::move(out));
}

ObserverRuntime::Inclusion ObserverRuntime::freeable_inclusion(ConfigId c1, Value a1, ConfigId c2, Value a2) {
    Lock l(mu_);
    Inclusion res;
    if (accepting(c1)) return res;
    if (accepting(c2)) {
        res.included = false;
        return res;
    }
    // A node pairs the first configuration x with the part d of the second one
    // that differs from x.  A counterexample keeps x rejecting while d accepts.
    // Nodes whose x is below that of a visited node with the same d are skipped:
    // any counterexample from them is one from the visited node.
    struct Node {
        ConfigId x, d;
        int parent;
        EventId via;
    };
    std::vector<Node> nodes;
    std::unordered_map<ConfigId, std::vector<int>> by_diff;
    auto add = [&](ConfigId x, ConfigId d, int parent, EventId via) {
        d = difference(x, d);
        auto& bucket = by_diff[d];
        for (int j : bucket)
            if (config_below(x, nodes[j].x, a1)) return;
        bucket.push_back(static_cast<int>(nodes.size()));
        nodes.push_back({x, d, parent, via});
    };
    // compare F(c2, a2) through the renaming a2 <-> a1
    c2 = swap(c2, a1, a2);
    add(live(c1, a1), live(c2, a1), -1, 0);
    const auto alpha = alphabet(a1);
    for (size_t i = 0; i < nodes.size(); ++i) {
        if (configs_.at(nodes[i].d).empty()) continue;
        for (EventId e : alpha) {
            ConfigId x = step(nodes[i].x, e);
            if (accepting(x)) continue;
            ConfigId d = step(nodes[i].d, e);
            if (accepting(d)) {
                res.included = false;
                res.counterexample.push_back(events_[e]);
                for (int j = static_cast<int>(i); nodes[j].parent >= 0; j = nodes[j].parent)
                    res.counterexample.push_back(events_[nodes[j].via]);
                std::reverse(res.counterexample.begin(), res.counterexample.end());
                return res;
            }
            add(live(x, a1), live(d, a1), static_cast<int>(i), e);
        }
    }
    return res;
}

bool ObserverRuntime::freeable_included(ConfigId c1, ConfigId c2, Value a) {
    Lock l(mu_);
    ConfigId x = live(c1, a), y = live(c2, a);
    if (x == y) return true;
    std::string key = std::to_string(x) + "," + std::to_string(y) + "," + std::to_string(a);
    auto it = incl_memo_.find(key);
    if (it != incl_memo_.end()) return it->second;
    bool r = freeable_inclusion(x, a, y, a).included;
    incl_memo_.emplace(key, r);
    return r;
}

}  // namespace smrmc

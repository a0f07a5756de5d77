#include "smrmc/observer.hpp"

#include <algorithm>
#include <deque>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include "smrmc/lexer.hpp"

namespace smrmc {

const char* sort_name(Sort s) {
    switch (s) {
        case Sort::Thread: return "thread";
        case Sort::Address: return "address";
        case Sort::Integer: return "integer";
    }
    return "?";
}

std::optional<Sort> parse_sort(const std::string& s) {
    if (s == "thread") return Sort::Thread;
    if (s == "address" || s == "ptr") return Sort::Address;
    if (s == "integer" || s == "int" || s == "data") return Sort::Integer;
    return std::nullopt;
}

Guard Guard::conj(std::vector<Guard> ks) {
    std::vector<Guard> out;
    for (auto& k : ks) {
        if (k.op == Op::True) continue;
        if (k.op == Op::False) return falsity();
        if (k.op == Op::And) {
            for (auto& kk : k.kids) out.push_back(kk);
        } else {
            out.push_back(std::move(k));
        }
    }
    if (out.empty()) return truth();
    if (out.size() == 1) return out[0];
    Guard g;
    g.op = Op::And;
    g.kids = std::move(out);
    return g;
}

Guard Guard::disj(std::vector<Guard> ks) {
    std::vector<Guard> out;
    for (auto& k : ks) {
        if (k.op == Op::False) continue;
        if (k.op == Op::True) return truth();
        if (k.op == Op::Or) {
            for (auto& kk : k.kids) out.push_back(kk);
        } else {
            out.push_back(std::move(k));
        }
    }
    if (out.empty()) return falsity();
    if (out.size() == 1) return out[0];
    Guard g;
    g.op = Op::Or;
    g.kids = std::move(out);
    return g;
}

Guard Guard::negate(Guard k) {
    switch (k.op) {
        case Op::True: return falsity();
        case Op::False: return truth();
        case Op::Eq: k.op = Op::Neq; return k;
        case Op::Neq: k.op = Op::Eq; return k;
        case Op::Not: return k.kids[0];
        default: break;
    }
    Guard g;
    g.op = Op::Not;
    g.kids.push_back(std::move(k));
    return g;
}

bool Guard::eval(const Value* params, const Value* vars) const {
    auto val = [&](const Term& t) { return t.is_param ? params[t.index] : vars[t.index]; };
    switch (op) {
        case Op::True: return true;
        case Op::False: return false;
        case Op::Eq: return val(lhs) == val(rhs);
        case Op::Neq: return val(lhs) != val(rhs);
        case Op::And:
            for (auto& k : kids)
                if (!k.eval(params, vars)) return false;
            return true;
        case Op::Or:
            for (auto& k : kids)
                if (k.eval(params, vars)) return true;
            return false;
        case Op::Not: return !kids[0].eval(params, vars);
    }
    return false;
}

int Observer::location(const std::string& n) const {
    for (size_t i = 0; i < locations.size(); ++i)
        if (locations[i] == n) return static_cast<int>(i);
    return -1;
}

int Observer::add_location(const std::string& n, bool acc) {
    locations.push_back(n);
    accepting.push_back(acc);
    return static_cast<int>(locations.size()) - 1;
}

int Observer::var_index(const std::string& n) const {
    for (size_t i = 0; i < vars.size(); ++i)
        if (vars[i].name == n) return static_cast<int>(i);
    return -1;
}

namespace {

void collect_terms(const Guard& g, std::vector<std::pair<Term, Term>>& out) {
    if (g.op == Guard::Op::Eq || g.op == Guard::Op::Neq) out.emplace_back(g.lhs, g.rhs);
    for (auto& k : g.kids) collect_terms(k, out);
}

}  // namespace

void Observer::validate() {
    if (locations.empty()) throw ObserverError("observer '" + name + "' has no locations");
    if (locations.size() > 255) throw ObserverError("observer '" + name + "' has more than 255 locations");
    if (accepting.size() != locations.size()) accepting.resize(locations.size(), false);
    if (initial < 0 || initial >= static_cast<int>(locations.size()))
        throw ObserverError("observer '" + name + "' has no valid initial location");
    {
        std::set<std::string> seen;
        for (auto& l : locations)
            if (!seen.insert(l).second) throw ObserverError("duplicate location '" + l + "'");
        seen.clear();
        for (auto& v : vars)
            if (!seen.insert(v.name).second) throw ObserverError("duplicate variable '" + v.name + "'");
    }

    // Infer parameter sorts: explicit signatures win, then comparisons with
    // variables, then comparisons between parameters, then defaults.
    std::map<std::string, std::vector<std::optional<Sort>>> inferred;
    for (auto& [k, s] : signatures) {
        auto& v = inferred[k];
        for (Sort x : s) v.push_back(x);
    }
    for (auto& t : transitions) {
        if (t.src < 0 || t.src >= static_cast<int>(locations.size()) || t.dst < 0 ||
            t.dst >= static_cast<int>(locations.size()))
            throw ObserverError("transition on '" + t.kind + "' references an unknown location");
        auto& sig = inferred[t.kind];
        if (sig.empty() && !signatures.count(t.kind)) sig.resize(t.formals.size());
        if (sig.size() != t.formals.size())
            throw ObserverError("event '" + t.kind + "' used with inconsistent arity");
    }
    bool changed = true;
    auto unify = [&](std::optional<Sort>& slot, Sort s, const std::string& kind) {
        if (!slot) {
            slot = s;
            changed = true;
        } else if (*slot != s) {
            throw ObserverError("event '" + kind + "': parameter compared at conflicting sorts");
        }
    };
    while (changed) {
        changed = false;
        for (auto& t : transitions) {
            auto& sig = inferred[t.kind];
            std::vector<std::pair<Term, Term>> cmps;
            collect_terms(t.guard, cmps);
            for (auto& [l, r] : cmps) {
                for (const Term* x : {&l, &r}) {
                    if (x->is_param && x->index >= t.formals.size())
                        throw ObserverError("guard of '" + t.kind + "' references unknown parameter");
                    if (!x->is_param && x->index >= vars.size())
                        throw ObserverError("guard of '" + t.kind + "' references unknown variable");
                }
                if (l.is_param && !r.is_param) unify(sig[l.index], vars[r.index].sort, t.kind);
                else if (!l.is_param && r.is_param) unify(sig[r.index], vars[l.index].sort, t.kind);
                else if (!l.is_param && !r.is_param) {
                    if (vars[l.index].sort != vars[r.index].sort)
                        throw ObserverError("guard compares variables of different sorts");
                } else {
                    auto& a = sig[l.index];
                    auto& b = sig[r.index];
                    if (a && !b) unify(b, *a, t.kind);
                    else if (b && !a) unify(a, *b, t.kind);
                    else if (a && b && *a != *b)
                        throw ObserverError("event '" + t.kind + "': parameters of different sorts compared");
                }
            }
        }
    }
    signatures.clear();
    for (auto& [k, sig] : inferred) {
        std::vector<Sort> out;
        for (size_t i = 0; i < sig.size(); ++i) {
            if (sig[i]) out.push_back(*sig[i]);
            else if (k == "free") out.push_back(Sort::Address);
            else if (i == 0) out.push_back(Sort::Thread);
            else throw ObserverError("cannot infer the sort of parameter " + std::to_string(i) + " of '" + k + "'");
        }
        if (k == "free" && (out.size() != 1 || out[0] != Sort::Address))
            throw ObserverError("free must take a single address");
        signatures[k] = out;
    }
}

std::string to_string(const Event& e) {
    std::string s = e.kind + "(";
    for (size_t i = 0; i < e.args.size(); ++i) {
        if (i) s += ",";
        s += e.args[i] == kFresh ? std::string("#") : std::to_string(e.args[i]);
    }
    return s + ")";
}

std::string to_string(const History& h) {
    if (h.empty()) return "eps";
    std::string s;
    for (size_t i = 0; i < h.size(); ++i) {
        if (i) s += ".";
        s += to_string(h[i]);
    }
    return s;
}

const std::vector<Value>& Universe::of(Sort s) const {
    switch (s) {
        case Sort::Thread: return threads;
        case Sort::Address: return addresses;
        case Sort::Integer: return integers;
    }
    return threads;
}

std::vector<Value> Universe::with_fresh(Sort s) const {
    auto v = of(s);
    v.push_back(kFresh);
    return v;
}

std::vector<int> step_location(const Observer& o, int loc, const Event& e, const Value* vars) {
    if (o.accepting[loc]) return {loc};
    std::vector<int> out;
    for (auto& t : o.transitions) {
        if (t.src != loc || t.kind != e.kind) continue;
        if (t.formals.size() != e.args.size())
            throw ObserverError("event " + to_string(e) + " does not match the arity of '" + t.kind + "'");
        if (t.guard.eval(e.args.data(), vars)) out.push_back(t.dst);
    }
    if (out.empty()) out.push_back(loc);
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

std::vector<std::vector<Value>> valuations(const Observer& o, const Universe& u) {
    std::vector<std::vector<Value>> out{{}};
    for (auto& v : o.vars) {
        std::vector<std::vector<Value>> next;
        for (auto& prefix : out)
            for (Value x : u.with_fresh(v.sort)) {
                auto p = prefix;
                p.push_back(x);
                next.push_back(std::move(p));
            }
        out = std::move(next);
    }
    return out;
}

bool is_violation(const Observer& o, const History& h, const Universe& u) {
    for (auto& val : valuations(o, u)) {
        std::set<int> cur{o.initial};
        if (o.accepting[o.initial]) return true;
        for (auto& e : h) {
            std::set<int> nxt;
            for (int l : cur)
                for (int d : step_location(o, l, e, val.data())) nxt.insert(d);
            cur = std::move(nxt);
            for (int l : cur)
                if (o.accepting[l]) return true;
        }
    }
    return false;
}

namespace {

Guard remap_vars(Guard g, const std::vector<int>& m) {
    if (!g.lhs.is_param) g.lhs.index = static_cast<uint8_t>(m[g.lhs.index]);
    if (!g.rhs.is_param) g.rhs.index = static_cast<uint8_t>(m[g.rhs.index]);
    for (auto& k : g.kids) k = remap_vars(std::move(k), m);
    return g;
}

}  // namespace

Observer cross_product(const Observer& a0, const Observer& b0) {
    Observer a = a0, b = b0;
    a.validate();
    b.validate();
    Observer p;
    p.name = a.name + "*" + b.name;
    p.vars = a.vars;
    std::vector<int> bmap(b.vars.size());
    for (size_t i = 0; i < b.vars.size(); ++i) {
        int j = p.var_index(b.vars[i].name);
        if (j >= 0 && p.vars[j].sort == b.vars[i].sort) {
            bmap[i] = j;
            continue;
        }
        std::string n = b.vars[i].name;
        while (p.var_index(n) >= 0) n += "'";
        p.vars.push_back({n, b.vars[i].sort});
        bmap[i] = static_cast<int>(p.vars.size()) - 1;
    }
    for (auto& [k, s] : b.signatures) {
        auto it = a.signatures.find(k);
        if (it != a.signatures.end() && it->second != s)
            throw ObserverError("event '" + k + "' has different signatures in the factors");
        p.signatures[k] = s;
    }
    for (auto& [k, s] : a.signatures) p.signatures[k] = s;

    std::set<std::string> kinds;
    for (auto& t : a.transitions) kinds.insert(t.kind);
    for (auto& t : b.transitions) kinds.insert(t.kind);

    std::map<std::pair<int, int>, int> ids;
    std::deque<std::pair<int, int>> work;
    auto id_of = [&](int x, int y) {
        auto key = std::make_pair(x, y);
        auto it = ids.find(key);
        if (it != ids.end()) return it->second;
        int id = p.add_location(a.locations[x] + "_" + b.locations[y], a.accepting[x] || b.accepting[y]);
        ids[key] = id;
        work.push_back(key);
        return id;
    };
    p.initial = id_of(a.initial, b.initial);
    while (!work.empty()) {
        auto [x, y] = work.front();
        work.pop_front();
        int src = ids[{x, y}];
        if (p.accepting[src]) continue;
        for (auto& k : kinds) {
            struct Opt {
                int dst;
                Guard g;
                const std::vector<std::string>* formals;
            };
            auto options = [&](const Observer& o, int loc, const std::vector<int>* m) {
                std::vector<Opt> out;
                std::vector<Guard> gs;
                for (auto& t : o.transitions) {
                    if (t.src != loc || t.kind != k) continue;
                    Guard g = m ? remap_vars(t.guard, *m) : t.guard;
                    gs.push_back(g);
                    out.push_back({t.dst, g, &t.formals});
                }
                bool any = !out.empty();
                out.push_back({loc, Guard::negate(Guard::disj(gs)), nullptr});
                return std::make_pair(out, any);
            };
            auto [oa, anya] = options(a, x, nullptr);
            auto [ob, anyb] = options(b, y, &bmap);
            if (!anya && !anyb) continue;
            for (size_t i = 0; i < oa.size(); ++i)
                for (size_t j = 0; j < ob.size(); ++j) {
                    if (i + 1 == oa.size() && j + 1 == ob.size()) continue;
                    Guard g = Guard::conj({oa[i].g, ob[j].g});
                    if (g.op == Guard::Op::False) continue;
                    Transition t;
                    t.src = src;
                    t.dst = id_of(oa[i].dst, ob[j].dst);
                    t.kind = k;
                    t.formals = oa[i].formals ? *oa[i].formals : *ob[j].formals;
                    t.guard = std::move(g);
                    p.transitions.push_back(std::move(t));
                }
        }
    }
    p.validate();
    return p;
}

History replace_address(const History& h, Value a, Value b, const Signatures& sigs) {
    History out = h;
    for (auto& e : out) {
        auto it = sigs.find(e.kind);
        for (size_t i = 0; i < e.args.size(); ++i) {
            bool adr = e.kind == "free" || (it != sigs.end() && i < it->second.size() && it->second[i] == Sort::Address);
            if (!adr) continue;
            if (e.args[i] == a) e.args[i] = b;
            else if (e.args[i] == b) e.args[i] = a;
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// text format

namespace {

struct ObsParser {
    Lexer lx;
    Observer o;

    explicit ObsParser(const std::string& s) : lx(s) {}

    std::string loc_name() {
        if (lx.peek().kind == Token::Kind::Number) return lx.next().text;
        return lx.ident();
    }

    Term term(const std::vector<std::string>& formals) {
        std::string n = lx.ident();
        for (size_t i = 0; i < formals.size(); ++i)
            if (formals[i] == n) return {true, static_cast<uint8_t>(i)};
        int v = o.var_index(n);
        if (v < 0) lx.fail("unknown name '" + n + "' in guard");
        return {false, static_cast<uint8_t>(v)};
    }

    Guard atom(const std::vector<std::string>& f) {
        if (lx.accept("true")) return Guard::truth();
        if (lx.accept("false")) return Guard::falsity();
        if (lx.accept("!")) {
            Guard g;
            g.op = Guard::Op::Not;
            g.kids.push_back(atom(f));
            return g;
        }
        if (lx.accept("(")) {
            Guard g = disj(f);
            lx.expect(")");
            return g;
        }
        Term l = term(f);
        bool eq;
        if (lx.accept("==")) eq = true;
        else if (lx.accept("!=")) eq = false;
        else lx.fail("expected '==' or '!='");
        Term r = term(f);
        return Guard::cmp(eq, l, r);
    }

    Guard conj(const std::vector<std::string>& f) {
        std::vector<Guard> ks{atom(f)};
        while (lx.accept("&&")) ks.push_back(atom(f));
        if (ks.size() == 1) return ks[0];
        Guard g;
        g.op = Guard::Op::And;
        g.kids = std::move(ks);
        return g;
    }

    Guard disj(const std::vector<std::string>& f) {
        std::vector<Guard> ks{conj(f)};
        while (lx.accept("||")) ks.push_back(conj(f));
        if (ks.size() == 1) return ks[0];
        Guard g;
        g.op = Guard::Op::Or;
        g.kids = std::move(ks);
        return g;
    }

    Observer run() {
        if (lx.accept("observer")) {
            o.name = lx.ident();
            while (!lx.accept(";")) {
                if (lx.at_end()) lx.fail("expected ';' after observer name");
                o.name += lx.next().text;
            }
        }
        bool have_init = false;
        while (!lx.at_end()) {
            std::string sec = lx.ident();
            lx.expect("{");
            if (sec == "vars") {
                while (!lx.accept("}")) {
                    std::string n = lx.ident();
                    lx.expect(":");
                    std::string s = lx.ident();
                    auto sort = parse_sort(s);
                    if (!sort) lx.fail("unknown sort '" + s + "'");
                    o.vars.push_back({n, *sort});
                    if (!lx.accept(";")) lx.accept(",");
                }
            } else if (sec == "locations") {
                while (!lx.accept("}")) {
                    std::string n = loc_name();
                    bool init = false, acc = false;
                    while (lx.is("initial") || lx.is("accepting")) {
                        if (lx.next().text == "initial") init = true;
                        else acc = true;
                    }
                    if (o.location(n) >= 0) lx.fail("duplicate location '" + n + "'");
                    int id = o.add_location(n, acc);
                    if (init) {
                        if (have_init) lx.fail("more than one initial location");
                        o.initial = id;
                        have_init = true;
                    }
                    if (!lx.accept(";")) lx.accept(",");
                }
            } else if (sec == "transitions") {
                while (!lx.accept("}")) {
                    Transition t;
                    std::string src = loc_name();
                    t.src = o.location(src);
                    if (t.src < 0) lx.fail("unknown location '" + src + "'");
                    lx.expect("--");
                    t.kind = lx.ident();
                    lx.expect("(");
                    std::vector<std::optional<Sort>> sorts;
                    while (!lx.accept(")")) {
                        t.formals.push_back(lx.ident());
                        std::optional<Sort> s;
                        if (lx.accept(":")) {
                            std::string sn = lx.ident();
                            s = parse_sort(sn);
                            if (!s) lx.fail("unknown sort '" + sn + "'");
                        }
                        sorts.push_back(s);
                        if (!lx.is(")")) lx.expect(",");
                    }
                    bool all = !sorts.empty() || t.formals.empty();
                    for (auto& s : sorts) all = all && s.has_value();
                    if (all && !sorts.empty()) {
                        std::vector<Sort> sig;
                        for (auto& s : sorts) sig.push_back(*s);
                        auto it = o.signatures.find(t.kind);
                        if (it != o.signatures.end() && it->second != sig)
                            lx.fail("conflicting signature for '" + t.kind + "'");
                        o.signatures[t.kind] = sig;
                    }
                    if (lx.accept("[")) {
                        t.guard = disj(t.formals);
                        lx.expect("]");
                    }
                    lx.expect("-->");
                    std::string dst = loc_name();
                    t.dst = o.location(dst);
                    if (t.dst < 0) lx.fail("unknown location '" + dst + "'");
                    o.transitions.push_back(std::move(t));
                    lx.accept(";");
                }
            } else {
                lx.fail("unknown section '" + sec + "'");
            }
        }
        if (!have_init) throw ObserverError("observer has no initial location");
        try {
            o.validate();
        } catch (const ObserverError& e) {
            throw ObserverError(std::string("malformed observer: ") + e.what());
        }
        return o;
    }
};

void print_guard(std::ostream& os, const Guard& g, const Observer& o, const std::vector<std::string>& f,
                 bool nested) {
    auto term = [&](const Term& t) { return t.is_param ? f.at(t.index) : o.vars.at(t.index).name; };
    switch (g.op) {
        case Guard::Op::True: os << "true"; return;
        case Guard::Op::False: os << "false"; return;
        case Guard::Op::Eq: os << term(g.lhs) << " == " << term(g.rhs); return;
        case Guard::Op::Neq: os << term(g.lhs) << " != " << term(g.rhs); return;
        case Guard::Op::Not:
            os << "!(";
            print_guard(os, g.kids[0], o, f, false);
            os << ")";
            return;
        case Guard::Op::And:
        case Guard::Op::Or: {
            if (nested) os << "(";
            for (size_t i = 0; i < g.kids.size(); ++i) {
                if (i) os << (g.op == Guard::Op::And ? " && " : " || ");
                print_guard(os, g.kids[i], o, f, true);
            }
            if (nested) os << ")";
            return;
        }
    }
}

}  // namespace

Observer parse_observer(const std::string& text) {
    ObsParser p(text);
    return p.run();
}

Observer load_observer(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ObserverError("cannot open observer file '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    Observer o = parse_observer(ss.str());
    if (o.name.empty()) {
        auto slash = path.find_last_of('/');
        auto base = path.substr(slash == std::string::npos ? 0 : slash + 1);
        o.name = base.substr(0, base.find('.'));
    }
    return o;
}

std::string print_observer(const Observer& o) {
    std::ostringstream os;
    if (!o.name.empty()) os << "observer " << o.name << ";\n";
    os << "vars {\n";
    for (auto& v : o.vars) os << "  " << v.name << ": " << sort_name(v.sort) << ";\n";
    os << "}\nlocations {\n";
    for (size_t i = 0; i < o.locations.size(); ++i) {
        os << "  " << o.locations[i];
        if (static_cast<int>(i) == o.initial) os << " initial";
        if (o.accepting[i]) os << " accepting";
        os << ";\n";
    }
    os << "}\ntransitions {\n";
    for (auto& t : o.transitions) {
        os << "  " << o.locations[t.src] << " --" << t.kind << "(";
        auto sig = o.signatures.find(t.kind);
        for (size_t i = 0; i < t.formals.size(); ++i) {
            if (i) os << ", ";
            os << t.formals[i];
            if (sig != o.signatures.end()) os << ": " << sort_name(sig->second[i]);
        }
        os << ") [";
        print_guard(os, t.guard, o, t.formals, false);
        os << "]--> " << o.locations[t.dst] << ";\n";
    }
    os << "}\n";
    return os.str();
}

}  // namespace smrmc

#include "smrmc/stdlib_observers.hpp"

#include <fstream>

namespace smrmc {

namespace {

const char* const kBase = R"(
observer base;
vars { v: address; }
locations { init initial; retired; final accepting; }
transitions {
  init --retire(t: thread, a: address) [a == v]--> retired;
  retired --free(a: address) [a == v]--> init;
  init --free(a: address) [a == v]--> final;
}
)";

// One hazard pointer slot per valuation of w; the slot count only bounds the
// integer universe.
const char* const kHp = R"(
observer hp;
vars { u: thread; v: address; w: integer; }
locations { init initial; invoked; protected; retired; final accepting; }
transitions {
  init --protect(t: thread, a: address, i: integer) [t == u && a == v && i == w]--> invoked;
  invoked --exit(t: thread) [t == u]--> protected;
  protected --retire(t: thread, a: address) [a == v]--> retired;
  retired --free(a: address) [a == v]--> final;
  invoked --protect(t, a, i) [t == u && a != v && i == w]--> init;
  invoked --unprotect(t: thread, i: integer) [t == u && i == w]--> init;
  protected --protect(t, a, i) [t == u && a != v && i == w]--> init;
  protected --unprotect(t, i) [t == u && i == w]--> init;
  retired --protect(t, a, i) [t == u && a != v && i == w]--> init;
  retired --unprotect(t, i) [t == u && i == w]--> init;
}
)";

const char* const kEbr = R"(
observer ebr;
vars { u: thread; v: address; }
locations { init initial; invoked; active; retired; final accepting; }
transitions {
  init --leaveQ(t: thread) [t == u]--> invoked;
  invoked --exit(t: thread) [t == u]--> active;
  active --retire(t: thread, a: address) [a == v]--> retired;
  retired --free(a: address) [a == v]--> final;
  invoked --enterQ(t: thread) [t == u]--> init;
  active --enterQ(t) [t == u]--> init;
  retired --enterQ(t) [t == u]--> init;
}
)";

const char* const kGc = R"(
observer gc;
vars { }
locations { init initial; final accepting; }
transitions {
  init --free(a: address) [true]--> final;
}
)";

const char* const kDta = R"(
observer dta;
vars { u: thread; v: address; }
locations { init initial; invoked; active; retired; final accepting; }
transitions {
  init --leaveQ(t: thread) [t == u]--> invoked;
  invoked --exit(t: thread) [t == u]--> active;
  active --retire(t: thread, a: address) [a == v]--> retired;
  retired --free(a: address) [a == v]--> final;
  invoked --enterQ(t: thread) [t == u]--> init;
  active --enterQ(t) [t == u]--> init;
  retired --enterQ(t) [t == u]--> init;
  invoked --recovered(t: thread, r: thread) [r == u]--> init;
  active --recovered(t, r) [r == u]--> init;
  retired --recovered(t, r) [r == u]--> init;
}
)";

const char* const kFrozen = R"(
observer frozen;
vars { u: thread; v: address; }
locations { idle initial; freezing; frozen; final accepting; }
transitions {
  idle --freeze(t: thread, a: address) [t == u && a == v]--> freezing;
  freezing --exit(t: thread) [t == u]--> frozen;
  frozen --free(a: address) [a == v]--> final;
}
)";

const char* const kTsMark = R"(
observer ts_mark;
vars { v: address; }
locations { init initial; reclaiming; final accepting; }
transitions {
  init --reclaim(t: thread) [true]--> reclaiming;
  reclaiming --mark(t: thread, a: address) [a == v]--> init;
  reclaiming --retire(t: thread, a: address) [a == v]--> init;
  init --free(a: address) [a == v]--> final;
}
)";

const char* const kTsDone = R"(
observer ts_done;
vars { u: thread; v: address; }
locations { init initial; done; final accepting; }
transitions {
  init --markdone(t: thread) [t == u]--> done;
  done --reclaim(t: thread) [true]--> init;
  init --free(a: address) [a == v]--> final;
}
)";

}  // namespace

Observer stdlib_observer(const std::string& name) {
    if (name == "base") return parse_observer(kBase);
    if (name == "gc") return parse_observer(kGc);
    if (name == "ebr") return parse_observer(kEbr);
    if (name == "dta") return parse_observer(kDta);
    if (name == "frozen") return parse_observer(kFrozen);
    if (name == "ts-mark" || name == "ts_mark") return parse_observer(kTsMark);
    if (name == "ts-done" || name == "ts_done") return parse_observer(kTsDone);
    if (name == "hp") return parse_observer(kHp);
    if (name.rfind("hp(", 0) == 0 && name.back() == ')') {
        int k = std::stoi(name.substr(3, name.size() - 4));
        if (k < 1) throw ObserverError("hp(k) needs k >= 1");
        return parse_observer(kHp);
    }
    throw ObserverError("unknown observer '" + name + "'");
}

Observer smr_observer(const std::string& spec, const std::string& search_dir) {
    if (spec == "gc") return stdlib_observer("gc");
    if (spec == "none" || spec == "base") return stdlib_observer("base");
    if (spec == "hp") return cross_product(stdlib_observer("base"), stdlib_observer("hp"));
    if (spec == "ebr") return cross_product(stdlib_observer("base"), stdlib_observer("ebr"));
    if (spec == "dta")
        return cross_product(cross_product(stdlib_observer("base"), stdlib_observer("dta")),
                             stdlib_observer("frozen"));
    if (spec == "ts")
        return cross_product(cross_product(stdlib_observer("base"), stdlib_observer("ts-mark")),
                             stdlib_observer("ts-done"));
    if (spec.rfind("file:", 0) == 0) return load_observer(spec.substr(5));
    if (spec.find('*') != std::string::npos) {
        Observer acc;
        bool first = true;
        size_t pos = 0;
        while (pos <= spec.size()) {
            size_t next = spec.find('*', pos);
            std::string part = spec.substr(pos, next == std::string::npos ? std::string::npos : next - pos);
            Observer o = stdlib_observer(part);
            acc = first ? o : cross_product(acc, o);
            first = false;
            if (next == std::string::npos) break;
            pos = next + 1;
        }
        return acc;
    }
    try {
        return stdlib_observer(spec);
    } catch (const ObserverError&) {
        if (!search_dir.empty()) {
            std::string path = search_dir + "/" + spec + ".obs";
            if (std::ifstream(path)) return load_observer(path);
        }
        throw;
    }
}

}  // namespace smrmc

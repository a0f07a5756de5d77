#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace smrmc {

enum class Sort : uint8_t { Thread, Address, Integer };

const char* sort_name(Sort s);
std::optional<Sort> parse_sort(const std::string& s);

// Values are plain integers.  Threads are 0..N-1, addresses use 0 for NULL and
// 1..A for heap cells, integers are themselves.  kFresh stands for "some value
// outside the declared universe" of the respective sort.
using Value = int32_t;
constexpr Value kFresh = -1;

struct ObserverError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct Term {
    bool is_param = true;
    uint8_t index = 0;
    bool operator==(const Term&) const = default;
};

struct Guard {
    enum class Op : uint8_t { True, False, Eq, Neq, And, Or, Not };
    Op op = Op::True;
    Term lhs{}, rhs{};
    std::vector<Guard> kids;

    static Guard truth() { return {}; }
    static Guard falsity() { Guard g; g.op = Op::False; return g; }
    static Guard cmp(bool eq, Term l, Term r) {
        Guard g;
        g.op = eq ? Op::Eq : Op::Neq;
        g.lhs = l;
        g.rhs = r;
        return g;
    }
    static Guard conj(std::vector<Guard> ks);
    static Guard disj(std::vector<Guard> ks);
    static Guard negate(Guard k);

    bool eval(const Value* params, const Value* vars) const;
    bool operator==(const Guard&) const = default;
};

struct Transition {
    int src = 0, dst = 0;
    std::string kind;
    std::vector<std::string> formals;
    Guard guard;
    bool operator==(const Transition&) const = default;
};

struct Variable {
    std::string name;
    Sort sort = Sort::Thread;
    bool operator==(const Variable&) const = default;
};

using Signatures = std::map<std::string, std::vector<Sort>>;

struct Observer {
    std::string name;
    std::vector<std::string> locations;
    int initial = 0;
    std::vector<bool> accepting;
    std::vector<Variable> vars;
    std::vector<Transition> transitions;
    // parameter sorts per event kind, derived from transitions
    std::map<std::string, std::vector<Sort>> signatures;

    int location(const std::string& n) const;
    int add_location(const std::string& n, bool acc = false);
    int var_index(const std::string& n) const;

    // recomputes signatures and checks well-formedness; throws ObserverError
    void validate();
};

struct Event {
    std::string kind;
    std::vector<Value> args;
    bool operator==(const Event&) const = default;
    bool operator<(const Event& o) const {
        return kind != o.kind ? kind < o.kind : args < o.args;
    }
};
using History = std::vector<Event>;

std::string to_string(const Event& e);
std::string to_string(const History& h);

// Finite value universe used for valuations and representative events.
struct Universe {
    std::vector<Value> threads{0, 1};
    std::vector<Value> addresses{0, 1, 2, 3};
    std::vector<Value> integers{0, 1};

    const std::vector<Value>& of(Sort s) const;
    // values of the sort plus the fresh representative
    std::vector<Value> with_fresh(Sort s) const;
};

// Stepping under a single valuation: the set of successor locations.  Missing
// (location, event) combinations stay put; accepting locations absorb.
std::vector<int> step_location(const Observer& o, int loc, const Event& e, const Value* vars);

std::vector<std::vector<Value>> valuations(const Observer& o, const Universe& u);

bool is_violation(const Observer& o, const History& h, const Universe& u);

// The product accepts a history iff either factor does.  Variables with the
// same name and sort are shared; other name clashes get renamed.
Observer cross_product(const Observer& a, const Observer& b);

// Swaps a and b in every address-sorted argument, free events included.
History replace_address(const History& h, Value a, Value b, const Signatures& sigs);

// text format (.obs)
Observer parse_observer(const std::string& text);
Observer load_observer(const std::string& path);
std::string print_observer(const Observer& o);

}  // namespace smrmc

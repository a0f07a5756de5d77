#pragma once

#include <string>
#include <vector>

#include "smrmc/lexer.hpp"

namespace smrmc {

enum class VarType : uint8_t { Ptr, Data, Set };
enum class Role : uint8_t { DataStructure, Smr };

const char* type_name(VarType t);

struct Decl {
    std::string name;
    VarType type = VarType::Ptr;
    bool operator==(const Decl&) const = default;
};

struct Layout {
    std::string name;
    std::vector<Decl> selectors;  // Ptr or Data
    bool operator==(const Layout&) const = default;
};

// Parameter sorts of an SMR API function as seen by client code.
struct SmrSignature {
    std::string name;
    std::vector<VarType> params;  // Ptr or Data
    bool operator==(const SmrSignature&) const = default;
};

struct Expr {
    enum class Kind : uint8_t { Name, Field, Null, Empty, Number, New, Pick };
    Kind kind = Kind::Null;
    std::string name;   // variable, layout (New) or set (Pick)
    std::string field;  // selector for Field
    int value = 0;

    static Expr var(std::string n) { return {Kind::Name, std::move(n), {}, 0}; }
    static Expr sel(std::string n, std::string f) { return {Kind::Field, std::move(n), std::move(f), 0}; }
    static Expr null() { return {Kind::Null, {}, {}, 0}; }
    static Expr empty() { return {Kind::Empty, {}, {}, 0}; }
    static Expr number(int v) { return {Kind::Number, {}, {}, v}; }
    bool operator==(const Expr&) const = default;
};

struct Cond {
    enum class Kind : uint8_t { True, False, Star, Eq, Neq, Lt, Not, And, Or, Cas, Contains, IsEmpty };
    Kind kind = Kind::True;
    Expr lhs, rhs, third;  // Cas: target, expected, desired
    std::string set;       // Contains / IsEmpty
    std::vector<Cond> kids;
    bool operator==(const Cond&) const = default;
};

struct Stmt {
    enum class Kind : uint8_t {
        Block,
        Local,     // decls
        Assign,    // lhs = rhs
        If,        // cond, body, orelse
        While,     // cond, body
        Foreach,   // name over set, body
        Break,
        Continue,
        Return,    // optional rhs (rhs.kind == Null && !has_value means none)
        Atomic,    // body
        Cas,       // cond (kind Cas)
        Assume,    // cond
        Assert,    // cond
        Lin,       // name, args (at most one)
        Call,      // name, args: SMR call, free, set operation or helper call
        Enter,     // name, args
        Exit,
        Skip,
    };
    Kind kind = Kind::Skip;
    std::string tags;  // empty: always present; otherwise the variants it belongs to
    int line = 0;
    std::string name;
    Expr lhs, rhs;
    bool has_value = false;
    Cond cond;
    std::vector<Expr> args;
    std::vector<Decl> decls;
    std::vector<Stmt> body, orelse;

    // source lines are not part of the structure
    bool operator==(const Stmt& o) const {
        return kind == o.kind && tags == o.tags && name == o.name && lhs == o.lhs && rhs == o.rhs &&
               has_value == o.has_value && cond == o.cond && args == o.args && decls == o.decls && body == o.body &&
               orelse == o.orelse;
    }
};

struct Operation {
    std::string name;
    bool api = true;  // false: helper function, only called from code
    std::vector<Decl> params;
    bool has_requires = false;
    Cond requires_;
    std::vector<Stmt> body;
    int line = 0;
    bool operator==(const Operation& o) const {
        return name == o.name && api == o.api && params == o.params && has_requires == o.has_requires &&
               requires_ == o.requires_ && body == o.body;
    }
};

struct Program {
    std::string name;
    Role role = Role::DataStructure;
    std::vector<Layout> layouts;
    std::vector<Decl> shared, threadlocal;
    std::string smr_name;
    std::vector<SmrSignature> smr;
    std::vector<Stmt> init;
    std::vector<Operation> operations;

    const Operation* operation(const std::string& n) const;
    const SmrSignature* smr_function(const std::string& n) const;
    bool operator==(const Program&) const = default;
};

Program parse_program(const std::string& text);
Program load_program(const std::string& path);
std::string print_program(const Program& p);
std::string to_string(const Expr& e);
std::string to_string(const Cond& c);

struct Diagnostic {
    int line = 0;
    std::string message;
};

// Well-formedness of a parsed program; empty result means the program is ok.
// `tags` selects the variant (statements tagged otherwise are ignored); an
// empty string keeps every statement.
std::vector<Diagnostic> validate_program(const Program& p, const std::string& tags = "");

// Keeps untagged statements and those sharing a letter with `tags`.
Program select_variant(const Program& p, const std::string& tags);

}  // namespace smrmc

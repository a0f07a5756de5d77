#include "smrmc/program.hpp"

#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <sstream>

namespace smrmc {

const char* type_name(VarType t) {
    switch (t) {
        case VarType::Ptr: return "ptr";
        case VarType::Data: return "data";
        case VarType::Set: return "set";
    }
    return "?";
}

const Operation* Program::operation(const std::string& n) const {
    for (auto& o : operations)
        if (o.name == n) return &o;
    return nullptr;
}

const SmrSignature* Program::smr_function(const std::string& n) const {
    for (auto& f : smr)
        if (f.name == n) return &f;
    return nullptr;
}

namespace {

bool is_type_word(const std::string& s) { return s == "ptr" || s == "data" || s == "int" || s == "set"; }

VarType type_of_word(const std::string& s) {
    if (s == "ptr") return VarType::Ptr;
    if (s == "set") return VarType::Set;
    return VarType::Data;
}

class Parser {
public:
    explicit Parser(const std::string& text) : lx(text) {}

    Program run() {
        Program p;
        while (!lx.at_end()) {
            int line = lx.peek().line;
            std::string kw = lx.ident();
            if (kw == "program") {
                p.name = lx.ident();
                lx.expect(";");
            } else if (kw == "role") {
                std::string r = lx.ident();
                if (r == "smr") p.role = Role::Smr;
                else if (r == "ds" || r == "data_structure") p.role = Role::DataStructure;
                else throw ParseError(line, 0, "unknown role '" + r + "'");
                lx.expect(";");
            } else if (kw == "layout" || kw == "struct") {
                Layout l;
                if (!lx.is("{")) l.name = lx.ident();
                lx.expect("{");
                while (!lx.accept("}")) {
                    std::string t = lx.ident();
                    if (t != "ptr" && t != "data") lx.fail("selector type must be 'ptr' or 'data'");
                    do l.selectors.push_back({lx.ident(), type_of_word(t)});
                    while (lx.accept(","));
                    lx.expect(";");
                }
                lx.accept(";");
                p.layouts.push_back(std::move(l));
            } else if (kw == "shared" || kw == "threadlocal") {
                auto ds = decls();
                auto& dst = kw == "shared" ? p.shared : p.threadlocal;
                dst.insert(dst.end(), ds.begin(), ds.end());
            } else if (kw == "smr") {
                p.smr_name = lx.ident();
                lx.expect("{");
                while (!lx.accept("}")) {
                    SmrSignature f;
                    f.name = lx.ident();
                    lx.expect("(");
                    if (!lx.is(")")) {
                        do {
                            std::string t = lx.ident();
                            if (t != "ptr" && t != "int" && t != "data") lx.fail("SMR parameter type must be ptr or int");
                            f.params.push_back(type_of_word(t));
                        } while (lx.accept(","));
                    }
                    lx.expect(")");
                    lx.expect(";");
                    p.smr.push_back(std::move(f));
                }
            } else if (kw == "init") {
                p.init = block();
            } else if (kw == "operation" || kw == "function") {
                Operation op;
                op.line = line;
                op.api = kw == "operation";
                op.name = lx.ident();
                lx.expect("(");
                if (!lx.is(")")) {
                    do {
                        Decl d;
                        std::string a = lx.ident();
                        if (is_type_word(a) && lx.peek().kind == Token::Kind::Ident) {
                            d.type = type_of_word(a);
                            d.name = lx.ident();
                        } else {
                            d.type = VarType::Data;
                            d.name = a;
                        }
                        op.params.push_back(d);
                    } while (lx.accept(","));
                }
                lx.expect(")");
                if (lx.accept("requires")) {
                    lx.expect("(");
                    op.has_requires = true;
                    op.requires_ = cond();
                    lx.expect(")");
                }
                op.body = block();
                p.operations.push_back(std::move(op));
            } else {
                throw ParseError(line, 0, "unexpected '" + kw + "' at top level");
            }
        }
        return p;
    }

private:
    Lexer lx;

    std::vector<Decl> decls() {
        std::vector<Decl> out;
        VarType t = VarType::Ptr;
        do {
            std::string a = lx.ident();
            if (is_type_word(a) && lx.peek().kind == Token::Kind::Ident) {
                t = type_of_word(a);
                a = lx.ident();
            }
            out.push_back({a, t});
        } while (lx.accept(","));
        lx.expect(";");
        return out;
    }

    std::vector<Stmt> block() {
        lx.expect("{");
        std::vector<Stmt> out;
        while (!lx.accept("}")) {
            if (lx.at_end()) lx.fail("unterminated block");
            out.push_back(stmt());
        }
        return out;
    }

    std::vector<Stmt> body() {
        if (lx.is("{")) return block();
        return {stmt()};
    }

    Expr expr() {
        const Token& t = lx.peek();
        if (t.kind == Token::Kind::Number || lx.is("-")) return Expr::number(static_cast<int>(lx.number()));
        std::string n = lx.ident();
        if (n == "NULL" || n == "null") return Expr::null();
        if (n == "EMPTY") return Expr::empty();
        if (n == "malloc") {
            Expr e;
            e.kind = Expr::Kind::New;
            return e;
        }
        if (n == "new") {
            Expr e;
            e.kind = Expr::Kind::New;
            e.name = lx.ident();
            if (lx.accept("(")) lx.expect(")");
            return e;
        }
        if (n == "pick" && lx.is("(")) {
            lx.expect("(");
            Expr e;
            e.kind = Expr::Kind::Pick;
            e.name = lx.ident();
            lx.expect(")");
            return e;
        }
        if (lx.accept(".") || lx.accept("->")) return Expr::sel(n, lx.ident());
        return Expr::var(n);
    }

    Cond cas_args() {
        Cond c;
        c.kind = Cond::Kind::Cas;
        lx.expect("(");
        lx.accept("&");
        c.lhs = expr();
        lx.expect(",");
        c.rhs = expr();
        lx.expect(",");
        c.third = expr();
        lx.expect(")");
        return c;
    }

    Cond atom() {
        Cond c;
        if (lx.accept("*")) {
            c.kind = Cond::Kind::Star;
            return c;
        }
        if (lx.accept("true")) return c;
        if (lx.accept("false")) {
            c.kind = Cond::Kind::False;
            return c;
        }
        if (lx.is("CAS") && lx.is("(", 1)) {
            lx.next();
            return cas_args();
        }
        if (lx.is("contains") && lx.is("(", 1)) {
            lx.next();
            lx.expect("(");
            c.kind = Cond::Kind::Contains;
            c.set = lx.ident();
            lx.expect(",");
            c.lhs = expr();
            lx.expect(")");
            return c;
        }
        if (lx.is("empty") && lx.is("(", 1)) {
            lx.next();
            lx.expect("(");
            c.kind = Cond::Kind::IsEmpty;
            c.set = lx.ident();
            lx.expect(")");
            return c;
        }
        c.lhs = expr();
        if (lx.accept("==")) c.kind = Cond::Kind::Eq;
        else if (lx.accept("!=")) c.kind = Cond::Kind::Neq;
        else if (lx.accept("<")) c.kind = Cond::Kind::Lt;
        else if (lx.accept(">")) {
            c.kind = Cond::Kind::Lt;
            c.rhs = c.lhs;
            c.lhs = expr();
            return c;
        } else lx.fail("expected comparison");
        c.rhs = expr();
        return c;
    }

    Cond unary() {
        if (lx.accept("!")) {
            Cond c;
            c.kind = Cond::Kind::Not;
            c.kids.push_back(unary());
            return c;
        }
        if (lx.accept("(")) {
            Cond c = cond();
            lx.expect(")");
            return c;
        }
        return atom();
    }

    Cond conj() {
        Cond c = unary();
        if (!lx.is("&&")) return c;
        Cond r;
        r.kind = Cond::Kind::And;
        r.kids.push_back(std::move(c));
        while (lx.accept("&&")) r.kids.push_back(unary());
        return r;
    }

    Cond cond() {
        Cond c = conj();
        if (!lx.is("||")) return c;
        Cond r;
        r.kind = Cond::Kind::Or;
        r.kids.push_back(std::move(c));
        while (lx.accept("||")) r.kids.push_back(conj());
        return r;
    }

    Stmt stmt() {
        Stmt s;
        s.line = lx.peek().line;
        if (lx.accept("@")) {
            std::string tags = lx.ident();
            Stmt inner = stmt();
            inner.tags = tags;
            inner.line = s.line;
            return inner;
        }
        if (lx.is("{")) {
            s.kind = Stmt::Kind::Block;
            s.body = block();
            return s;
        }
        if (lx.accept(";")) return s;
        std::string kw = lx.ident();
        if (kw == "local") {
            s.kind = Stmt::Kind::Local;
            s.decls = decls();
        } else if (kw == "if") {
            s.kind = Stmt::Kind::If;
            lx.expect("(");
            s.cond = cond();
            lx.expect(")");
            s.body = body();
            if (lx.accept("else")) s.orelse = body();
        } else if (kw == "while") {
            s.kind = Stmt::Kind::While;
            lx.expect("(");
            s.cond = cond();
            lx.expect(")");
            s.body = body();
        } else if (kw == "for") {
            s.kind = Stmt::Kind::Foreach;
            lx.expect("(");
            s.name = lx.ident();
            lx.expect(":");
            s.rhs = Expr::var(lx.ident());
            lx.expect(")");
            s.body = body();
        } else if (kw == "break" || kw == "continue" || kw == "exit" || kw == "skip") {
            s.kind = kw == "break" ? Stmt::Kind::Break
                     : kw == "continue" ? Stmt::Kind::Continue
                     : kw == "exit" ? Stmt::Kind::Exit
                                    : Stmt::Kind::Skip;
            lx.expect(";");
        } else if (kw == "return") {
            s.kind = Stmt::Kind::Return;
            if (!lx.is(";")) {
                s.has_value = true;
                s.rhs = expr();
            }
            lx.expect(";");
        } else if (kw == "atomic") {
            s.kind = Stmt::Kind::Atomic;
            s.body = block();
        } else if (kw == "CAS" && lx.is("(")) {
            s.kind = Stmt::Kind::Cas;
            s.cond = cas_args();
            lx.expect(";");
        } else if (kw == "assume" || kw == "assert") {
            s.kind = kw == "assume" ? Stmt::Kind::Assume : Stmt::Kind::Assert;
            lx.expect("(");
            s.cond = cond();
            lx.expect(")");
            lx.expect(";");
        } else if (kw == "lin" || kw == "enter") {
            s.kind = kw == "lin" ? Stmt::Kind::Lin : Stmt::Kind::Enter;
            s.name = lx.ident();
            s.args = args();
            lx.expect(";");
        } else if (lx.is("(")) {
            s.kind = Stmt::Kind::Call;
            s.name = kw;
            s.args = args();
            lx.expect(";");
        } else {
            s.kind = Stmt::Kind::Assign;
            s.lhs = Expr::var(kw);
            if (lx.accept(".") || lx.accept("->")) s.lhs = Expr::sel(kw, lx.ident());
            lx.expect("=");
            s.rhs = expr();
            lx.expect(";");
        }
        return s;
    }

    std::vector<Expr> args() {
        std::vector<Expr> out;
        lx.expect("(");
        if (!lx.is(")")) {
            do out.push_back(expr());
            while (lx.accept(","));
        }
        lx.expect(")");
        return out;
    }
};

// ---------------------------------------------------------------- printing

std::string show(const Expr& e) {
    switch (e.kind) {
        case Expr::Kind::Name: return e.name;
        case Expr::Kind::Field: return e.name + "." + e.field;
        case Expr::Kind::Null: return "NULL";
        case Expr::Kind::Empty: return "EMPTY";
        case Expr::Kind::Number: return std::to_string(e.value);
        case Expr::Kind::New: return e.name.empty() ? "malloc" : "new " + e.name;
        case Expr::Kind::Pick: return "pick(" + e.name + ")";
    }
    return "?";
}

std::string show(const Cond& c) {
    auto join = [&](const char* op) {
        std::string s;
        for (size_t i = 0; i < c.kids.size(); ++i) {
            if (i) s += std::string(" ") + op + " ";
            s += "(" + show(c.kids[i]) + ")";
        }
        return s;
    };
    switch (c.kind) {
        case Cond::Kind::True: return "true";
        case Cond::Kind::False: return "false";
        case Cond::Kind::Star: return "*";
        case Cond::Kind::Eq: return show(c.lhs) + " == " + show(c.rhs);
        case Cond::Kind::Neq: return show(c.lhs) + " != " + show(c.rhs);
        case Cond::Kind::Lt: return show(c.lhs) + " < " + show(c.rhs);
        case Cond::Kind::Not: return "!(" + show(c.kids[0]) + ")";
        case Cond::Kind::And: return join("&&");
        case Cond::Kind::Or: return join("||");
        case Cond::Kind::Cas: return "CAS(" + show(c.lhs) + ", " + show(c.rhs) + ", " + show(c.third) + ")";
        case Cond::Kind::Contains: return "contains(" + c.set + ", " + show(c.lhs) + ")";
        case Cond::Kind::IsEmpty: return "empty(" + c.set + ")";
    }
    return "?";
}

std::string show_decls(const std::vector<Decl>& ds) {
    std::string s;
    for (size_t i = 0; i < ds.size(); ++i) {
        if (i) s += ", ";
        s += std::string(type_name(ds[i].type)) + " " + ds[i].name;
    }
    return s;
}

std::string show_args(const std::vector<Expr>& as) {
    std::string s = "(";
    for (size_t i = 0; i < as.size(); ++i) {
        if (i) s += ", ";
        s += show(as[i]);
    }
    return s + ")";
}

void print_block(std::ostream& os, const std::vector<Stmt>& b, int depth);

void print_stmt(std::ostream& os, const Stmt& s, int depth) {
    std::string ind(depth * 2, ' ');
    os << ind;
    if (!s.tags.empty()) os << "@" << s.tags << " ";
    switch (s.kind) {
        case Stmt::Kind::Block:
            print_block(os, s.body, depth);
            os << "\n";
            return;
        case Stmt::Kind::Local: os << "local " << show_decls(s.decls) << ";\n"; return;
        case Stmt::Kind::Assign: os << show(s.lhs) << " = " << show(s.rhs) << ";\n"; return;
        case Stmt::Kind::If:
            os << "if (" << show(s.cond) << ") ";
            print_block(os, s.body, depth);
            if (!s.orelse.empty()) {
                os << " else ";
                print_block(os, s.orelse, depth);
            }
            os << "\n";
            return;
        case Stmt::Kind::While:
            os << "while (" << show(s.cond) << ") ";
            print_block(os, s.body, depth);
            os << "\n";
            return;
        case Stmt::Kind::Foreach:
            os << "for (" << s.name << " : " << show(s.rhs) << ") ";
            print_block(os, s.body, depth);
            os << "\n";
            return;
        case Stmt::Kind::Break: os << "break;\n"; return;
        case Stmt::Kind::Continue: os << "continue;\n"; return;
        case Stmt::Kind::Return:
            os << "return";
            if (s.has_value) os << " " << show(s.rhs);
            os << ";\n";
            return;
        case Stmt::Kind::Atomic:
            os << "atomic ";
            print_block(os, s.body, depth);
            os << "\n";
            return;
        case Stmt::Kind::Cas: os << show(s.cond) << ";\n"; return;
        case Stmt::Kind::Assume: os << "assume(" << show(s.cond) << ");\n"; return;
        case Stmt::Kind::Assert: os << "assert(" << show(s.cond) << ");\n"; return;
        case Stmt::Kind::Lin: os << "lin " << s.name << show_args(s.args) << ";\n"; return;
        case Stmt::Kind::Call: os << s.name << show_args(s.args) << ";\n"; return;
        case Stmt::Kind::Enter: os << "enter " << s.name << show_args(s.args) << ";\n"; return;
        case Stmt::Kind::Exit: os << "exit;\n"; return;
        case Stmt::Kind::Skip: os << "skip;\n"; return;
    }
}

void print_block(std::ostream& os, const std::vector<Stmt>& b, int depth) {
    os << "{\n";
    for (auto& s : b) print_stmt(os, s, depth + 1);
    os << std::string(depth * 2, ' ') << "}";
}

}  // namespace

std::string to_string(const Expr& e) { return show(e); }
std::string to_string(const Cond& c) { return show(c); }

Program parse_program(const std::string& text) { return Parser(text).run(); }

Program load_program(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open program file '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_program(ss.str());
}

std::string print_program(const Program& p) {
    std::ostringstream os;
    if (!p.name.empty()) os << "program " << p.name << ";\n";
    os << "role " << (p.role == Role::Smr ? "smr" : "ds") << ";\n\n";
    for (auto& l : p.layouts) {
        os << "layout " << l.name << (l.name.empty() ? "" : " ") << "{\n";
        for (auto& s : l.selectors) os << "  " << type_name(s.type) << " " << s.name << ";\n";
        os << "}\n";
    }
    if (!p.smr_name.empty() || !p.smr.empty()) {
        os << "smr " << (p.smr_name.empty() ? "api" : p.smr_name) << " {\n";
        for (auto& f : p.smr) {
            os << "  " << f.name << "(";
            for (size_t i = 0; i < f.params.size(); ++i)
                os << (i ? ", " : "") << (f.params[i] == VarType::Ptr ? "ptr" : "int");
            os << ");\n";
        }
        os << "}\n";
    }
    for (auto& d : p.shared) os << "shared " << type_name(d.type) << " " << d.name << ";\n";
    for (auto& d : p.threadlocal) os << "threadlocal " << type_name(d.type) << " " << d.name << ";\n";
    os << "\ninit ";
    print_block(os, p.init, 0);
    os << "\n";
    for (auto& op : p.operations) {
        os << "\n" << (op.api ? "operation " : "function ") << op.name << "(" << show_decls(op.params) << ")";
        if (op.has_requires) os << " requires (" << show(op.requires_) << ")";
        os << " ";
        print_block(os, op.body, 0);
        os << "\n";
    }
    return os.str();
}

// ---------------------------------------------------------------- variants

namespace {

bool keep(const Stmt& s, const std::string& tags) {
    if (s.tags.empty()) return true;
    for (char c : s.tags)
        if (tags.find(c) != std::string::npos) return true;
    return false;
}

std::vector<Stmt> filter(const std::vector<Stmt>& b, const std::string& tags) {
    std::vector<Stmt> out;
    for (auto& s : b) {
        if (!keep(s, tags)) continue;
        Stmt c = s;
        c.tags.clear();
        c.body = filter(s.body, tags);
        c.orelse = filter(s.orelse, tags);
        out.push_back(std::move(c));
    }
    return out;
}

}  // namespace

Program select_variant(const Program& p, const std::string& tags) {
    Program q = p;
    q.init = filter(p.init, tags);
    for (auto& op : q.operations) op.body = filter(op.body, tags);
    return q;
}

// ---------------------------------------------------------------- validation

namespace {

class Validator {
public:
    Validator(const Program& p, std::vector<Diagnostic>& out) : p(p), out(out) {}

    void run() {
        std::set<std::string> sels;
        for (auto& l : p.layouts)
            for (auto& s : l.selectors) {
                auto it = selectors.find(s.name);
                if (it != selectors.end() && it->second != s.type)
                    diag(0, "selector '" + s.name + "' declared with conflicting types");
                selectors[s.name] = s.type;
            }
        for (auto& d : p.shared) declare(globals, d, 0);
        for (auto& d : p.threadlocal) declare(globals, d, 0);
        std::set<std::string> names;
        for (auto& op : p.operations)
            if (!names.insert(op.name).second) diag(op.line, "duplicate operation '" + op.name + "'");
        for (auto& f : p.smr)
            if (p.role == Role::DataStructure && p.operation(f.name))
                diag(0, "operation '" + f.name + "' clashes with an SMR function");

        scope = globals;
        in_init = true;
        check_block(p.init);
        in_init = false;
        for (auto& op : p.operations) check_operation(op);
        check_recursion();
    }

private:
    const Program& p;
    std::vector<Diagnostic>& out;
    std::map<std::string, VarType> selectors, globals, scope;
    bool in_init = false;
    int loops = 0;
    bool inside_call = false;
    const Operation* current = nullptr;

    void diag(int line, std::string msg) { out.push_back({line, std::move(msg)}); }

    void declare(std::map<std::string, VarType>& m, const Decl& d, int line) {
        if (m.count(d.name)) diag(line, "duplicate variable '" + d.name + "'");
        m[d.name] = d.type;
    }

    void collect_locals(const std::vector<Stmt>& b) {
        for (auto& s : b) {
            if (s.kind == Stmt::Kind::Local)
                for (auto& d : s.decls) declare(scope, d, s.line);
            if (s.kind == Stmt::Kind::Foreach && !scope.count(s.name))
                diag(s.line, "loop variable '" + s.name + "' is not declared");
            collect_locals(s.body);
            collect_locals(s.orelse);
        }
    }

    void check_operation(const Operation& op) {
        current = &op;
        scope = globals;
        for (auto& d : op.params) {
            if (d.type == VarType::Set) diag(op.line, "set-typed parameter '" + d.name + "'");
            declare(scope, d, op.line);
        }
        collect_locals(op.body);
        if (op.has_requires) {
            if (!op.api) diag(op.line, "requires clause on helper function '" + op.name + "'");
            check_cond(op.requires_, op.line, true);
        }
        loops = 0;
        inside_call = false;
        check_block(op.body);
        if (inside_call) diag(op.line, "operation '" + op.name + "' ends inside an SMR call (enter without exit)");
        current = nullptr;
    }

    std::optional<VarType> type_of(const Expr& e, int line) {
        switch (e.kind) {
            case Expr::Kind::Name: {
                auto it = scope.find(e.name);
                if (it == scope.end()) {
                    diag(line, "unknown identifier '" + e.name + "'");
                    return std::nullopt;
                }
                return it->second;
            }
            case Expr::Kind::Field: {
                auto it = scope.find(e.name);
                if (it == scope.end()) {
                    diag(line, "unknown identifier '" + e.name + "'");
                    return std::nullopt;
                }
                if (it->second != VarType::Ptr) diag(line, "dereference of non-pointer '" + e.name + "'");
                auto s = selectors.find(e.field);
                if (s == selectors.end()) {
                    diag(line, "unknown selector '" + e.field + "'");
                    return std::nullopt;
                }
                return s->second;
            }
            case Expr::Kind::Null: return VarType::Ptr;
            case Expr::Kind::Empty:
            case Expr::Kind::Number: return VarType::Data;
            case Expr::Kind::New: {
                if (!e.name.empty()) {
                    bool found = false;
                    for (auto& l : p.layouts) found = found || l.name == e.name;
                    if (!found) diag(line, "unknown layout '" + e.name + "'");
                }
                return VarType::Ptr;
            }
            case Expr::Kind::Pick: {
                auto it = scope.find(e.name);
                if (it == scope.end() || it->second != VarType::Set) diag(line, "pick from non-set '" + e.name + "'");
                return VarType::Ptr;
            }
        }
        return std::nullopt;
    }

    void check_set(const std::string& n, int line) {
        auto it = scope.find(n);
        if (it == scope.end()) diag(line, "unknown identifier '" + n + "'");
        else if (it->second != VarType::Set) diag(line, "'" + n + "' is not a set");
    }

    bool is_shared(const Expr& e) {
        if (e.kind == Expr::Kind::Field) return true;
        if (e.kind != Expr::Kind::Name) return false;
        for (auto& d : p.shared)
            if (d.name == e.name) return true;
        return false;
    }

    bool plain(const Expr& e) { return e.kind != Expr::Kind::New && e.kind != Expr::Kind::Pick; }

    void check_cond(const Cond& c, int line, bool requires_clause = false) {
        switch (c.kind) {
            case Cond::Kind::True:
            case Cond::Kind::False:
            case Cond::Kind::Star: return;
            case Cond::Kind::Not:
            case Cond::Kind::And:
            case Cond::Kind::Or:
                for (auto& k : c.kids) check_cond(k, line, requires_clause);
                return;
            case Cond::Kind::Eq:
            case Cond::Kind::Neq:
            case Cond::Kind::Lt: {
                if (!plain(c.lhs) || !plain(c.rhs)) diag(line, "allocation inside a condition");
                auto l = type_of(c.lhs, line), r = type_of(c.rhs, line);
                if (l && r && *l != *r) diag(line, "comparison between " + std::string(type_name(*l)) + " and " +
                                                       type_name(*r));
                if (l && *l == VarType::Set) diag(line, "comparison of sets");
                if (c.kind == Cond::Kind::Lt && l && *l == VarType::Ptr) diag(line, "'<' on pointers");
                if (requires_clause && (c.lhs.kind == Expr::Kind::Field || c.rhs.kind == Expr::Kind::Field))
                    diag(line, "requires clause may not dereference");
                return;
            }
            case Cond::Kind::Cas: {
                if (requires_clause) diag(line, "CAS in requires clause");
                if (!is_shared(c.lhs)) diag(line, "CAS target must be a shared variable or a selector");
                if (!plain(c.rhs) || !plain(c.third)) diag(line, "allocation inside CAS");
                auto t = type_of(c.lhs, line), o = type_of(c.rhs, line), n = type_of(c.third, line);
                if (t && o && n && (*t != *o || *t != *n || *t == VarType::Set)) diag(line, "ill-typed CAS");
                if (c.rhs.kind == Expr::Kind::Field || c.third.kind == Expr::Kind::Field)
                    diag(line, "CAS operands must be variables or constants");
                return;
            }
            case Cond::Kind::Contains: {
                check_set(c.set, line);
                auto t = type_of(c.lhs, line);
                if (t && *t != VarType::Ptr) diag(line, "contains expects a pointer");
                return;
            }
            case Cond::Kind::IsEmpty: check_set(c.set, line); return;
        }
    }

    void check_block(const std::vector<Stmt>& b) {
        for (size_t i = 0; i < b.size(); ++i) {
            const Stmt& s = b[i];
            if (inside_call && s.kind != Stmt::Kind::Exit)
                diag(s.line, "statement between enter and exit of an SMR call");
            check_stmt(s);
        }
    }

    void check_stmt(const Stmt& s) {
        int line = s.line;
        switch (s.kind) {
            case Stmt::Kind::Block: check_block(s.body); return;
            case Stmt::Kind::Local:
                if (in_init) diag(line, "local declaration in init");
                return;
            case Stmt::Kind::Skip: return;
            case Stmt::Kind::Assign: {
                if (s.lhs.kind != Expr::Kind::Name && s.lhs.kind != Expr::Kind::Field)
                    diag(line, "invalid assignment target");
                auto l = type_of(s.lhs, line), r = type_of(s.rhs, line);
                if (l && r && *l != *r)
                    diag(line, "assignment of " + std::string(type_name(*r)) + " to " + type_name(*l));
                if (s.lhs.kind == Expr::Kind::Field && !plain(s.rhs)) diag(line, "allocation into a selector");
                if (s.lhs.kind == Expr::Kind::Field && s.rhs.kind == Expr::Kind::Field)
                    diag(line, "selector-to-selector assignment");
                return;
            }
            case Stmt::Kind::If: {
                check_cond(s.cond, line);
                bool before = inside_call;
                check_block(s.body);
                bool a = inside_call;
                inside_call = before;
                check_block(s.orelse);
                if (a != inside_call) diag(line, "branches disagree on SMR call nesting");
                return;
            }
            case Stmt::Kind::While:
            case Stmt::Kind::Foreach: {
                if (s.kind == Stmt::Kind::While) check_cond(s.cond, line);
                else {
                    check_set(s.rhs.name, line);
                    auto it = scope.find(s.name);
                    if (it != scope.end() && it->second != VarType::Ptr) diag(line, "loop variable must be a pointer");
                }
                bool before = inside_call;
                ++loops;
                check_block(s.body);
                --loops;
                if (inside_call != before) diag(line, "loop body changes SMR call nesting");
                inside_call = before;
                return;
            }
            case Stmt::Kind::Break:
            case Stmt::Kind::Continue:
                if (loops == 0) diag(line, std::string(s.kind == Stmt::Kind::Break ? "break" : "continue") +
                                               " outside a loop");
                if (inside_call) diag(line, "jump out of an SMR call");
                return;
            case Stmt::Kind::Return:
                if (in_init) diag(line, "return in init");
                if (inside_call) diag(line, "return inside an SMR call");
                if (s.has_value) type_of(s.rhs, line);
                return;
            case Stmt::Kind::Atomic: check_block(s.body); return;
            case Stmt::Kind::Cas: check_cond(s.cond, line); return;
            case Stmt::Kind::Assume:
            case Stmt::Kind::Assert: check_cond(s.cond, line); return;
            case Stmt::Kind::Lin:
                if (p.role == Role::Smr) diag(line, "linearization annotation in an SMR implementation");
                if (s.args.size() > 1) diag(line, "lin takes at most one value");
                for (auto& a : s.args) {
                    auto t = type_of(a, line);
                    if (t && *t != VarType::Data) diag(line, "lin value must be data");
                }
                return;
            case Stmt::Kind::Enter: {
                if (p.role == Role::Smr) diag(line, "enter in an SMR implementation");
                if (inside_call) diag(line, "nested enter");
                check_smr_call(s);
                inside_call = true;
                return;
            }
            case Stmt::Kind::Exit:
                if (!inside_call) diag(line, "exit without enter");
                inside_call = false;
                return;
            case Stmt::Kind::Call: check_call(s); return;
        }
    }

    void check_smr_call(const Stmt& s) {
        auto* f = p.smr_function(s.name);
        if (!f) {
            diag(s.line, "unknown SMR function '" + s.name + "'");
            return;
        }
        if (f->params.size() != s.args.size()) {
            diag(s.line, "SMR function '" + s.name + "' expects " + std::to_string(f->params.size()) + " arguments");
            return;
        }
        for (size_t i = 0; i < s.args.size(); ++i) {
            if (!plain(s.args[i]) || s.args[i].kind == Expr::Kind::Field)
                diag(s.line, "SMR call arguments must be variables or constants");
            auto t = type_of(s.args[i], s.line);
            if (t && *t != f->params[i]) diag(s.line, "argument " + std::to_string(i + 1) + " of '" + s.name + "' has wrong type");
        }
    }

    void check_call(const Stmt& s) {
        int line = s.line;
        auto expect_args = [&](std::vector<VarType> ts) {
            if (ts.size() != s.args.size()) {
                diag(line, "'" + s.name + "' expects " + std::to_string(ts.size()) + " arguments");
                return;
            }
            for (size_t i = 0; i < ts.size(); ++i) {
                if (ts[i] == VarType::Set) {
                    if (s.args[i].kind != Expr::Kind::Name) diag(line, "expected a set");
                    else check_set(s.args[i].name, line);
                    continue;
                }
                if (!plain(s.args[i])) diag(line, "allocation inside a call");
                auto t = type_of(s.args[i], line);
                if (t && *t != ts[i]) diag(line, "argument " + std::to_string(i + 1) + " of '" + s.name + "' has wrong type");
            }
        };
        if (s.name == "free") {
            if (p.role != Role::Smr) diag(line, "free outside SMR role");
            expect_args({VarType::Ptr});
            return;
        }
        if (s.name == "add" || s.name == "remove") {
            expect_args({VarType::Set, VarType::Ptr});
            return;
        }
        if (s.name == "clear") {
            expect_args({VarType::Set});
            return;
        }
        if (s.name == "copy") {
            expect_args({VarType::Set, VarType::Set});
            return;
        }
        if (p.role == Role::DataStructure && p.smr_function(s.name)) {
            if (inside_call) diag(line, "nested SMR call");
            check_smr_call(s);
            return;
        }
        if (auto* op = p.operation(s.name)) {
            if (op->api && p.role == Role::DataStructure)
                diag(line, "call of operation '" + s.name + "' from code");
            std::vector<VarType> ts;
            for (auto& d : op->params) ts.push_back(d.type);
            expect_args(ts);
            return;
        }
        diag(line, "unknown function '" + s.name + "'");
    }

    void check_recursion() {
        std::map<std::string, std::set<std::string>> calls;
        std::function<void(const std::vector<Stmt>&, std::set<std::string>&)> gather =
            [&](const std::vector<Stmt>& b, std::set<std::string>& acc) {
                for (auto& s : b) {
                    if (s.kind == Stmt::Kind::Call && p.operation(s.name)) acc.insert(s.name);
                    gather(s.body, acc);
                    gather(s.orelse, acc);
                }
            };
        for (auto& op : p.operations) gather(op.body, calls[op.name]);
        for (auto& op : p.operations) {
            std::set<std::string> seen;
            std::vector<std::string> stack(calls[op.name].begin(), calls[op.name].end());
            while (!stack.empty()) {
                auto n = stack.back();
                stack.pop_back();
                if (n == op.name) {
                    diag(op.line, "recursive call of '" + op.name + "'");
                    break;
                }
                if (!seen.insert(n).second) continue;
                for (auto& m : calls[n]) stack.push_back(m);
            }
        }
    }
};

}  // namespace

std::vector<Diagnostic> validate_program(const Program& p, const std::string& tags) {
    std::vector<Diagnostic> out;
    Program q = tags.empty() ? p : select_variant(p, tags);
    Validator(q, out).run();
    return out;
}

}  // namespace smrmc

#include "smrmc/semantics.hpp"

#include <algorithm>
#include <functional>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <stdexcept>

namespace smrmc {

const char* mode_name(ReuseMode m) {
    switch (m) {
        case ReuseMode::Full: return "full";
        case ReuseMode::One: return "one";
        case ReuseMode::None: return "none";
    }
    return "?";
}

std::optional<ReuseMode> parse_mode(const std::string& s) {
    if (s == "full") return ReuseMode::Full;
    if (s == "one") return ReuseMode::One;
    if (s == "none") return ReuseMode::None;
    return std::nullopt;
}

namespace {
const char* const kFaultNames[] = {"none",          "unsafe-access",     "segfault",
                                   "racy-call",     "double-retire",     "assertion-failure",
                                   "not-linearizable", "smr-violation", "exhausted"};
}

const char* fault_name(Fault f) { return kFaultNames[static_cast<int>(f)]; }

std::optional<Fault> parse_fault(const std::string& s) {
    for (int i = 0; i <= static_cast<int>(Fault::Exhausted); ++i)
        if (s == kFaultNames[i]) return static_cast<Fault>(i);
    return std::nullopt;
}

namespace {

// ------------------------------------------------------------ compiled code

enum class Scope : uint8_t { Shared, ThreadLocal, Frame };

struct VarRef {
    Scope scope = Scope::Shared;
    int idx = 0;
    VarType type = VarType::Ptr;
    std::string name;
};

struct Operand {
    enum class Kind : uint8_t { None, Var, Sel, Null, Const, New, Pick };
    Kind kind = Kind::None;
    VarRef var;  // Var; base pointer of Sel; set of Pick
    int sel = -1;
    Cell value = 0;
    VarType type = VarType::Ptr;
};

struct Atom {
    Cond::Kind kind = Cond::Kind::True;
    Operand l, r, t;
    VarRef set;
    std::vector<Atom> kids;
    std::string text;
};

enum class Op : uint8_t {
    Assign,
    Branch,
    Assume,
    Assert,
    Cas,
    Lin,
    Enter,
    Exit,
    Free,
    SetAdd,
    SetRemove,
    SetClear,
    SetCopy,
    PopMin,
    Jump,
    AtomicBegin,
    AtomicEnd,
    End,
};

struct Instr {
    Op op = Op::End;
    Operand a, b;
    Atom cond;
    VarRef set, set2;
    std::vector<Operand> args;
    std::string name;
    int next = -1, alt = -1;
    int line = 0;
    bool nested = false;  // Enter of an API operation called from SMR code: no race check
    std::string text;
};

struct Code {
    std::string name;
    bool api = true;
    std::vector<VarRef> params;
    bool has_requires = false;
    Atom requires_;
    std::vector<Instr> instrs;
    std::vector<VarType> frame;
    std::vector<std::string> frame_names;
    int statements = 0;
};

struct Selectors {
    std::vector<std::string> names;
    std::vector<VarType> types;
    std::map<std::string, int> index;
};

class Compiler {
public:
    Compiler(const Program& p, const Selectors& sels) : p_(p), sels_(sels) {}

    Code compile(const std::string& name, const std::vector<Decl>& params, const std::vector<Stmt>& body, bool api,
                 const Cond* req) {
        Code code;
        code.name = name;
        code.api = api;
        code_ = &code;
        scopes_.assign(1, {});
        for (auto& d : params) {
            VarRef v = slot(d.type, d.name);
            code.params.push_back(v);
            bind(d.name, v);
        }
        declare_locals(body);
        if (req) {
            code.has_requires = true;
            code.requires_ = atom(*req);
        }
        fns_.push_back({{}, 0});
        block(body);
        for (int j : fns_.back().returns) code.instrs[j].next = here();
        fns_.pop_back();
        Instr end;
        end.op = Op::End;
        end.text = "end of " + name;
        emit(std::move(end));
        code_ = nullptr;
        return code;
    }

private:
    using Names = std::map<std::string, Operand>;
    struct Loop {
        std::vector<int> breaks;
        int cont = 0;
        int atomic = 0;
    };
    struct Fn {
        std::vector<int> returns;
        int atomic = 0;
    };
    struct Patch {
        std::vector<std::pair<int, int>> t, f;
    };

    const Program& p_;
    const Selectors& sels_;
    Code* code_ = nullptr;
    std::vector<Names> scopes_;
    std::vector<Loop> loops_;
    std::vector<Fn> fns_;
    std::vector<std::string> inlining_;
    int atomic_ = 0;
    int line_ = 0;

    [[noreturn]] void fail(const std::string& msg) const {
        throw std::runtime_error("line " + std::to_string(line_) + ": " + msg);
    }

    int here() const { return static_cast<int>(code_->instrs.size()); }

    int emit(Instr in) {
        in.line = line_;
        if (in.next < 0) in.next = here() + 1;
        code_->instrs.push_back(std::move(in));
        return here() - 1;
    }

    void patch(const std::vector<std::pair<int, int>>& sites, int target) {
        for (auto [i, field] : sites) (field == 0 ? code_->instrs[i].next : code_->instrs[i].alt) = target;
    }

    VarRef slot(VarType t, const std::string& name) {
        VarRef v;
        v.scope = Scope::Frame;
        v.idx = static_cast<int>(code_->frame.size());
        v.type = t;
        v.name = name;
        code_->frame.push_back(t);
        code_->frame_names.push_back(name);
        return v;
    }

    void bind(const std::string& name, const VarRef& v) {
        Operand o;
        o.kind = Operand::Kind::Var;
        o.var = v;
        o.type = v.type;
        scopes_.back()[name] = o;
    }

    void declare_locals(const std::vector<Stmt>& b) {
        for (auto& s : b) {
            if (s.kind == Stmt::Kind::Local)
                for (auto& d : s.decls) bind(d.name, slot(d.type, d.name));
            declare_locals(s.body);
            declare_locals(s.orelse);
        }
    }

    Operand lookup(const std::string& name) const {
        auto& sc = scopes_.back();
        if (auto it = sc.find(name); it != sc.end()) return it->second;
        auto global = [&](const std::vector<Decl>& ds, Scope scope) -> std::optional<Operand> {
            for (size_t i = 0; i < ds.size(); ++i)
                if (ds[i].name == name) {
                    Operand o;
                    o.kind = Operand::Kind::Var;
                    o.var = {scope, static_cast<int>(i), ds[i].type, name};
                    o.type = ds[i].type;
                    return o;
                }
            return std::nullopt;
        };
        if (auto o = global(p_.threadlocal, Scope::ThreadLocal)) return *o;
        if (auto o = global(p_.shared, Scope::Shared)) return *o;
        fail("unknown identifier '" + name + "'");
    }

    VarRef var(const std::string& name) const {
        Operand o = lookup(name);
        if (o.kind != Operand::Kind::Var) fail("'" + name + "' is bound to a constant");
        return o.var;
    }

    Operand operand(const Expr& e) const {
        Operand o;
        switch (e.kind) {
            case Expr::Kind::Name: return lookup(e.name);
            case Expr::Kind::Field: {
                o.kind = Operand::Kind::Sel;
                o.var = var(e.name);
                auto it = sels_.index.find(e.field);
                if (it == sels_.index.end()) fail("unknown selector '" + e.field + "'");
                o.sel = it->second;
                o.type = sels_.types[it->second];
                return o;
            }
            case Expr::Kind::Null:
                o.kind = Operand::Kind::Null;
                o.type = VarType::Ptr;
                return o;
            case Expr::Kind::Empty:
                o.kind = Operand::Kind::Const;
                o.value = kEmpty;
                o.type = VarType::Data;
                return o;
            case Expr::Kind::Number:
                o.kind = Operand::Kind::Const;
                o.value = static_cast<Cell>(e.value);
                o.type = VarType::Data;
                return o;
            case Expr::Kind::New:
                o.kind = Operand::Kind::New;
                o.type = VarType::Ptr;
                return o;
            case Expr::Kind::Pick:
                o.kind = Operand::Kind::Pick;
                o.var = var(e.name);
                o.type = VarType::Ptr;
                return o;
        }
        return o;
    }

    Atom atom(const Cond& c) const {
        Atom a;
        a.kind = c.kind;
        a.text = to_string(c);
        switch (c.kind) {
            case Cond::Kind::Eq:
            case Cond::Kind::Neq:
            case Cond::Kind::Lt:
                a.l = operand(c.lhs);
                a.r = operand(c.rhs);
                break;
            case Cond::Kind::Cas:
                a.l = operand(c.lhs);
                a.r = operand(c.rhs);
                a.t = operand(c.third);
                break;
            case Cond::Kind::Contains:
                a.set = var(c.set);
                a.l = operand(c.lhs);
                break;
            case Cond::Kind::IsEmpty: a.set = var(c.set); break;
            case Cond::Kind::Not:
            case Cond::Kind::And:
            case Cond::Kind::Or:
                for (auto& k : c.kids) a.kids.push_back(atom(k));
                break;
            default: break;
        }
        return a;
    }

    Patch cond(const Cond& c) {
        Patch p;
        switch (c.kind) {
            case Cond::Kind::True:
            case Cond::Kind::False: {
                Instr j;
                j.op = Op::Jump;
                int i = emit(std::move(j));
                (c.kind == Cond::Kind::True ? p.t : p.f).push_back({i, 0});
                return p;
            }
            case Cond::Kind::Not: {
                Patch k = cond(c.kids[0]);
                return {k.f, k.t};
            }
            case Cond::Kind::And:
            case Cond::Kind::Or: {
                bool conj = c.kind == Cond::Kind::And;
                for (size_t i = 0; i < c.kids.size(); ++i) {
                    Patch k = cond(c.kids[i]);
                    auto& pass = conj ? k.t : k.f;
                    auto& out = conj ? k.f : k.t;
                    (conj ? p.f : p.t).insert((conj ? p.f : p.t).end(), out.begin(), out.end());
                    if (i + 1 < c.kids.size()) patch(pass, here());
                    else (conj ? p.t : p.f) = pass;
                }
                return p;
            }
            default: {
                Instr b;
                b.op = Op::Branch;
                b.cond = atom(c);
                b.text = "if (" + to_string(c) + ")";
                int i = emit(std::move(b));
                p.t.push_back({i, 0});
                p.f.push_back({i, 1});
                return p;
            }
        }
    }

    void block(const std::vector<Stmt>& b) {
        for (auto& s : b) stmt(s);
    }

    void leave_atomic(int depth) {
        if (atomic_ > 0 && depth == 0) {
            Instr e;
            e.op = Op::AtomicEnd;
            emit(std::move(e));
        }
    }

    int jump() {
        Instr j;
        j.op = Op::Jump;
        return emit(std::move(j));
    }

    void jump_to(int target) { code_->instrs[jump()].next = target; }

    void stmt(const Stmt& s) {
        if (s.kind != Stmt::Kind::Block && s.kind != Stmt::Kind::Local) ++code_->statements;
        int saved_line = line_;
        if (s.line) line_ = s.line;
        switch (s.kind) {
            case Stmt::Kind::Block: block(s.body); break;
            case Stmt::Kind::Local:
            case Stmt::Kind::Skip: break;
            case Stmt::Kind::Assign: {
                Instr in;
                in.op = Op::Assign;
                in.a = operand(s.lhs);
                in.b = operand(s.rhs);
                in.text = to_string(s.lhs) + " = " + to_string(s.rhs);
                emit(std::move(in));
                break;
            }
            case Stmt::Kind::If: {
                Patch pt = cond(s.cond);
                patch(pt.t, here());
                block(s.body);
                if (!s.orelse.empty()) {
                    int j = jump();
                    patch(pt.f, here());
                    block(s.orelse);
                    code_->instrs[j].next = here();
                } else {
                    patch(pt.f, here());
                }
                break;
            }
            case Stmt::Kind::While: {
                int head = here();
                Patch pt = cond(s.cond);
                patch(pt.t, here());
                loops_.push_back({{}, head, atomic_});
                block(s.body);
                jump_to(head);
                patch(pt.f, here());
                for (int b : loops_.back().breaks) code_->instrs[b].next = here();
                loops_.pop_back();
                break;
            }
            case Stmt::Kind::Foreach: {
                VarRef tmp = slot(VarType::Set, "$" + s.name);
                Instr cp;
                cp.op = Op::SetCopy;
                cp.set = tmp;
                cp.set2 = var(s.rhs.name);
                cp.text = "for (" + s.name + " : " + s.rhs.name + ")";
                emit(std::move(cp));
                int head = here();
                Instr br;
                br.op = Op::Branch;
                br.cond.kind = Cond::Kind::IsEmpty;
                br.cond.set = tmp;
                br.cond.text = "empty(" + tmp.name + ")";
                br.text = "for (" + s.name + " : " + s.rhs.name + ")";
                int b = emit(std::move(br));
                code_->instrs[b].alt = here();
                Instr pop;
                pop.op = Op::PopMin;
                pop.set = tmp;
                pop.a = operand(Expr::var(s.name));
                pop.text = s.name + " = next of " + s.rhs.name;
                emit(std::move(pop));
                loops_.push_back({{}, head, atomic_});
                block(s.body);
                jump_to(head);
                code_->instrs[b].next = here();
                for (int j : loops_.back().breaks) code_->instrs[j].next = here();
                loops_.pop_back();
                break;
            }
            case Stmt::Kind::Break:
            case Stmt::Kind::Continue: {
                if (loops_.empty()) fail("break/continue outside a loop");
                leave_atomic(loops_.back().atomic);
                int j = jump();
                code_->instrs[j].text = s.kind == Stmt::Kind::Break ? "break" : "continue";
                if (s.kind == Stmt::Kind::Break) loops_.back().breaks.push_back(j);
                else code_->instrs[j].next = loops_.back().cont;
                break;
            }
            case Stmt::Kind::Return: {
                leave_atomic(fns_.back().atomic);
                int j = jump();
                code_->instrs[j].text = "return";
                fns_.back().returns.push_back(j);
                break;
            }
            case Stmt::Kind::Atomic: {
                if (atomic_ == 0) {
                    Instr b;
                    b.op = Op::AtomicBegin;
                    emit(std::move(b));
                }
                ++atomic_;
                block(s.body);
                --atomic_;
                if (atomic_ == 0) {
                    Instr e;
                    e.op = Op::AtomicEnd;
                    emit(std::move(e));
                }
                break;
            }
            case Stmt::Kind::Cas: {
                Instr in;
                in.op = Op::Cas;
                in.cond = atom(s.cond);
                in.text = to_string(s.cond);
                int i = emit(std::move(in));
                code_->instrs[i].alt = i + 1;
                break;
            }
            case Stmt::Kind::Assume:
            case Stmt::Kind::Assert: {
                Instr in;
                in.op = s.kind == Stmt::Kind::Assume ? Op::Assume : Op::Assert;
                in.cond = atom(s.cond);
                in.text = std::string(s.kind == Stmt::Kind::Assume ? "assume(" : "assert(") + to_string(s.cond) + ")";
                emit(std::move(in));
                break;
            }
            case Stmt::Kind::Lin: {
                Instr in;
                in.op = Op::Lin;
                in.name = s.name;
                for (auto& a : s.args) in.args.push_back(operand(a));
                in.text = "lin " + s.name + "(" + (s.args.empty() ? "" : to_string(s.args[0])) + ")";
                emit(std::move(in));
                break;
            }
            case Stmt::Kind::Enter: {
                Instr in;
                in.op = Op::Enter;
                in.name = s.name;
                for (auto& a : s.args) in.args.push_back(operand(a));
                in.text = "enter " + s.name + args_text(s.args);
                emit(std::move(in));
                break;
            }
            case Stmt::Kind::Exit: {
                Instr in;
                in.op = Op::Exit;
                in.text = "exit";
                emit(std::move(in));
                break;
            }
            case Stmt::Kind::Call: call(s); break;
        }
        line_ = saved_line;
    }

    static std::string args_text(const std::vector<Expr>& as) {
        std::string r = "(";
        for (size_t i = 0; i < as.size(); ++i) r += (i ? ", " : "") + to_string(as[i]);
        return r + ")";
    }

    void call(const Stmt& s) {
        std::string text = s.name + args_text(s.args);
        auto set_op = [&](Op op) {
            Instr in;
            in.op = op;
            in.set = var(s.args.at(0).name);
            if (op == Op::SetCopy) in.set2 = var(s.args.at(1).name);
            else if (op != Op::SetClear) in.a = operand(s.args.at(1));
            in.text = text;
            emit(std::move(in));
        };
        if (s.name == "free") {
            Instr in;
            in.op = Op::Free;
            in.a = operand(s.args.at(0));
            in.text = text;
            emit(std::move(in));
            return;
        }
        if (s.name == "add") return set_op(Op::SetAdd);
        if (s.name == "remove") return set_op(Op::SetRemove);
        if (s.name == "clear") return set_op(Op::SetClear);
        if (s.name == "copy") return set_op(Op::SetCopy);
        if (p_.role == Role::DataStructure && p_.smr_function(s.name)) {
            Instr in;
            in.op = Op::Enter;
            in.name = s.name;
            for (auto& a : s.args) in.args.push_back(operand(a));
            in.text = text;
            emit(std::move(in));
            Instr ex;
            ex.op = Op::Exit;
            ex.text = "exit " + s.name;
            emit(std::move(ex));
            return;
        }
        const Operation* callee = p_.operation(s.name);
        if (!callee) fail("unknown function '" + s.name + "'");
        if (std::find(inlining_.begin(), inlining_.end(), s.name) != inlining_.end())
            fail("recursive call of '" + s.name + "'");
        if (callee->params.size() != s.args.size()) fail("arity mismatch calling '" + s.name + "'");
        bool nested = p_.role == Role::Smr && callee->api;
        if (nested) {
            Instr in;
            in.op = Op::Enter;
            in.nested = true;
            in.name = s.name;
            for (auto& a : s.args) in.args.push_back(operand(a));
            in.text = text;
            emit(std::move(in));
        }
        Names callee_scope;
        for (size_t i = 0; i < s.args.size(); ++i) callee_scope[callee->params[i].name] = operand(s.args[i]);
        if (writes_param(callee->body, callee->params))
            fail("helper '" + s.name + "' assigns to a parameter");
        scopes_.push_back(std::move(callee_scope));
        inlining_.push_back(s.name);
        declare_locals(callee->body);
        auto saved_loops = std::move(loops_);
        loops_.clear();
        fns_.push_back({{}, atomic_});
        block(callee->body);
        for (int j : fns_.back().returns) code_->instrs[j].next = here();
        fns_.pop_back();
        if (nested) {
            Instr ex;
            ex.op = Op::Exit;
            ex.text = "exit " + s.name;
            emit(std::move(ex));
        }
        loops_ = std::move(saved_loops);
        inlining_.pop_back();
        scopes_.pop_back();
    }

    static bool writes_param(const std::vector<Stmt>& b, const std::vector<Decl>& params) {
        for (auto& s : b) {
            for (auto& d : params) {
                if (s.kind == Stmt::Kind::Assign && s.lhs.kind == Expr::Kind::Name && s.lhs.name == d.name) return true;
                if (s.kind == Stmt::Kind::Foreach && s.name == d.name) return true;
            }
            if (writes_param(s.body, params) || writes_param(s.orelse, params)) return true;
        }
        return false;
    }
};

// ------------------------------------------------------------ state layout

constexpr int kOwner = 0, kInput = 1, kSmrCfg = 2, kLinCfg = 4, kFreshMask = 6, kFreedMask = 7, kPendingMask = 8;
constexpr int kHeader = 9;

uint16_t u16(Cell c) { return static_cast<uint16_t>(c); }
Cell c16(uint32_t v) { return static_cast<Cell>(static_cast<uint16_t>(v)); }

std::string show_ptr(Cell v) {
    if (v == kBot) return "⊥";
    if (v == kSeg) return "seg";
    if (v == kNull) return "NULL";
    return "a" + std::to_string(v);
}

std::string show_data(Cell v) { return v == kEmpty ? "EMPTY" : std::to_string(v); }

}  // namespace

struct Machine::Impl {
    Program prog;
    Bounds b;
    MachineOptions opt;
    std::unique_ptr<ObserverRuntime> smr, lin;
    mutable std::mutex racy_mu;
    mutable std::map<std::tuple<ConfigId, EventId, uint32_t>, bool> racy_memo;
    Selectors sels;
    std::vector<int> ptr_sels, data_sels;
    std::vector<Code> codes;  // operations, then init last
    int init_code = 0;
    std::vector<int> api;
    struct Entry {
        int code = 0;
        std::vector<Cell> args;
    };
    std::vector<Entry> entries;
    int N = 0, A = 0, nsel = 0, ntl = 0, nframe = 0, tb = 0, s0 = 0, h0 = 0, v0 = 0, ncells = 0;

    // ---- cells

    int tbase(int t) const { return kHeader + t * tb; }
    int pc_cell(int t) const { return tbase(t); }
    int op_cell(int t) const { return tbase(t) + 1; }
    int done_cell(int t) const { return tbase(t) + 2; }
    int tl_cell(int t, int i) const { return tbase(t) + 3 + i; }
    int frame_cell(int t, int i) const { return tbase(t) + 3 + ntl + i; }
    int var_cell(const VarRef& v, int t) const {
        switch (v.scope) {
            case Scope::Shared: return s0 + v.idx;
            case Scope::ThreadLocal: return tl_cell(t, v.idx);
            case Scope::Frame: return frame_cell(t, v.idx);
        }
        return 0;
    }
    int heap_cell(Value a, int sel) const { return h0 + (a - 1) * nsel + sel; }
    bool is_adr(Cell v) const { return v >= 1 && v <= A; }

    static bool bit(const std::vector<Cell>& c, int word, int i) { return (u16(c[word + i / 16]) >> (i % 16)) & 1; }
    bool valid(const std::vector<Cell>& c, int i) const { return bit(c, v0, i); }
    void set_valid(std::vector<Cell>& c, int i, bool v) const {
        uint16_t w = u16(c[v0 + i / 16]);
        w = v ? (w | (1u << (i % 16))) : (w & ~(1u << (i % 16)));
        c[v0 + i / 16] = static_cast<Cell>(w);
    }

    static uint32_t get32(const std::vector<Cell>& c, int i) {
        return static_cast<uint32_t>(u16(c[i])) | static_cast<uint32_t>(u16(c[i + 1])) << 16;
    }
    static void set32(std::vector<Cell>& c, int i, uint32_t v) {
        c[i] = c16(v & 0xffff);
        c[i + 1] = c16(v >> 16);
    }
    static uint32_t mask(const std::vector<Cell>& c, int i) { return u16(c[i]); }
    static void set_mask(std::vector<Cell>& c, int i, uint32_t m) { c[i] = c16(m); }

    const Code* code_of(const std::vector<Cell>& c, int t) const {
        int op = c[op_cell(t)];
        return op < 0 ? nullptr : &codes[op];
    }

    // pointer variable cells (shared, thread-local, frames of active threads)
    template <class F>
    void for_vars(const std::vector<Cell>& c, F f) const {
        for (size_t i = 0; i < prog.shared.size(); ++i)
            f(s0 + static_cast<int>(i), prog.shared[i].type, prog.shared[i].name);
        for (int t = 0; t < N; ++t) {
            std::string pre = "t" + std::to_string(t) + ".";
            for (int i = 0; i < ntl; ++i) f(tl_cell(t, i), prog.threadlocal[i].type, pre + prog.threadlocal[i].name);
            if (const Code* code = code_of(c, t))
                for (size_t i = 0; i < code->frame.size(); ++i)
                    f(frame_cell(t, static_cast<int>(i)), code->frame[i], pre + code->frame_names[i]);
        }
    }

    std::vector<bool> image(const std::vector<Cell>& c) const {
        std::vector<bool> img(A + 1, false);
        for_vars(c, [&](int i, VarType ty, const std::string&) {
            if (ty == VarType::Ptr && valid(c, i) && is_adr(c[i])) img[c[i]] = true;
        });
        for (Value a = 1; a <= A; ++a)
            for (int s : ptr_sels) {
                int i = heap_cell(a, s);
                if (valid(c, i) && is_adr(c[i])) img[c[i]] = true;
            }
        return img;
    }

    // ---- construction

    void build(const Program& p) {
        prog = p;
        for (auto& l : p.layouts)
            for (auto& d : l.selectors) {
                auto it = sels.index.find(d.name);
                if (it != sels.index.end()) continue;
                sels.index[d.name] = static_cast<int>(sels.names.size());
                sels.names.push_back(d.name);
                sels.types.push_back(d.type);
            }
        for (size_t i = 0; i < sels.types.size(); ++i)
            (sels.types[i] == VarType::Ptr ? ptr_sels : data_sels).push_back(static_cast<int>(i));
        Compiler comp(prog, sels);
        for (auto& o : prog.operations) {
            if (!o.api) continue;
            api.push_back(static_cast<int>(codes.size()));
            codes.push_back(comp.compile(o.name, o.params, o.body, true, o.has_requires ? &o.requires_ : nullptr));
        }
        init_code = static_cast<int>(codes.size());
        codes.push_back(comp.compile("init", {}, prog.init, false, nullptr));

        N = b.threads;
        A = b.addresses;
        if (N < 1 || b.ops < 0 || A < 1) throw std::runtime_error("bounds must be positive");
        if (A > kMaxAddresses) throw std::runtime_error("at most 15 addresses are supported");
        if (opt.mgc && opt.pool > A) throw std::runtime_error("client pool exceeds the address bound");
        nsel = static_cast<int>(sels.names.size());
        ntl = static_cast<int>(prog.threadlocal.size());
        for (auto& c : codes) nframe = std::max(nframe, static_cast<int>(c.frame.size()));
        tb = 3 + ntl + nframe;
        s0 = kHeader + N * tb;
        h0 = s0 + static_cast<int>(prog.shared.size());
        v0 = h0 + A * nsel;
        ncells = v0 + (v0 + 15) / 16;

        if (opt.mgc) {
            for (int ci : api) {
                auto& code = codes[ci];
                std::vector<std::vector<Cell>> doms;
                for (auto& v : code.params) {
                    std::vector<Cell> d;
                    if (v.type == VarType::Ptr) {
                        if (code.name != "retire") d.push_back(kNull);
                        for (int a = 1; a <= opt.pool; ++a) d.push_back(static_cast<Cell>(a));
                    } else {
                        for (Value x : opt.mgc_ints) d.push_back(static_cast<Cell>(x));
                    }
                    doms.push_back(d);
                }
                std::vector<Cell> cur(doms.size());
                std::function<void(size_t)> rec = [&](size_t i) {
                    if (i == doms.size()) {
                        entries.push_back({ci, cur});
                        return;
                    }
                    for (Cell v : doms[i]) {
                        cur[i] = v;
                        rec(i + 1);
                    }
                };
                rec(0);
            }
        }
    }

    Universe smr_universe() const {
        Universe u;
        u.threads.clear();
        for (int t = 0; t < N; ++t) u.threads.push_back(t);
        u.addresses.clear();
        for (int a = 0; a <= A; ++a) u.addresses.push_back(a);
        std::set<Value> ints{0};
        if (opt.mgc) {
            ints.insert(opt.mgc_ints.begin(), opt.mgc_ints.end());
        } else {
            bool any_var = false;
            for (auto& c : codes)
                for (auto& in : c.instrs)
                    if (in.op == Op::Enter)
                        for (auto& a : in.args)
                            if (a.type == VarType::Data) {
                                if (a.kind == Operand::Kind::Const) ints.insert(a.value);
                                else any_var = true;
                            }
            if (any_var)
                for (int d = 0; d <= b.dom_max(); ++d) ints.insert(d);
        }
        u.integers.assign(ints.begin(), ints.end());
        return u;
    }

    Universe lin_universe() const {
        Universe u;
        u.threads = {0};
        u.addresses = {0};
        u.integers.clear();
        for (int v = 1; v <= N * b.ops; ++v) u.integers.push_back(v);
        if (u.integers.empty()) u.integers.push_back(1);
        return u;
    }

    // ---- execution

    struct Ctx {
        std::vector<Cell> c;
        int t = 0;
        Fault fault = Fault::None;
        std::string detail;
        std::vector<Event> events;
        bool aba = false;
        int racy_exact = -1, racy_fast = -1;
    };

    void set_fault(Ctx& x, Fault f, std::string d) const {
        if (x.fault != Fault::None) return;
        x.fault = f;
        x.detail = std::move(d);
    }

    void emit(Ctx& x, Event e) const {
        ConfigId cfg = smr->step(get32(x.c, kSmrCfg), e);
        set32(x.c, kSmrCfg, cfg);
        if (smr->accepting(cfg)) set_fault(x, Fault::SmrViolation, "SMR specification violated by " + to_string(e));
        x.events.push_back(std::move(e));
    }

    // address held by pointer p for a dereference; -1 on segfault
    int deref(Ctx& x, const VarRef& p) const {
        int cell = var_cell(p, x.t);
        Cell v = x.c[cell];
        if (!is_adr(v)) {
            set_fault(x, Fault::Segfault, "dereference of " + p.name + " holding " + show_ptr(v));
            return -1;
        }
        if (!valid(x.c, cell) && !opt.mgc)
            set_fault(x, Fault::UnsafeAccess, "dereference of invalid pointer " + p.name);
        return v;
    }

    // cell read/written by an lvalue operand; -1 on segfault
    int lcell(Ctx& x, const Operand& o) const {
        if (o.kind == Operand::Kind::Var) return var_cell(o.var, x.t);
        int a = deref(x, o.var);
        return a < 0 ? -1 : heap_cell(a, o.sel);
    }

    std::pair<Cell, bool> read(Ctx& x, const Operand& o) const {
        switch (o.kind) {
            case Operand::Kind::Null: return {kNull, true};
            case Operand::Kind::Const: return {o.value, true};
            case Operand::Kind::Var:
            case Operand::Kind::Sel: {
                int cell = lcell(x, o);
                if (cell < 0) return {kBot, false};
                return {x.c[cell], o.type != VarType::Ptr || valid(x.c, cell)};
            }
            default: return {kBot, false};
        }
    }

    void write(Ctx& x, const Operand& o, Cell v, bool val) const {
        int cell = lcell(x, o);
        if (cell < 0) return;
        x.c[cell] = v;
        if (o.type == VarType::Ptr) set_valid(x.c, cell, val);
    }

    // makes the cells of two compared pointer operands valid
    void validate(Ctx& x, const Operand& o) const {
        if (o.kind != Operand::Kind::Var && o.kind != Operand::Kind::Sel) return;
        int cell = lcell(x, o);
        if (cell >= 0) set_valid(x.c, cell, true);
    }

    bool eval(Ctx& x, const Atom& a) const {
        switch (a.kind) {
            case Cond::Kind::True:
            case Cond::Kind::Star: return true;
            case Cond::Kind::False: return false;
            case Cond::Kind::Not: return !eval(x, a.kids[0]);
            case Cond::Kind::And:
                for (auto& k : a.kids)
                    if (!eval(x, k)) return false;
                return true;
            case Cond::Kind::Or:
                for (auto& k : a.kids)
                    if (eval(x, k)) return true;
                return false;
            case Cond::Kind::Eq:
            case Cond::Kind::Neq: {
                auto [lv, lval] = read(x, a.l);
                auto [rv, rval] = read(x, a.r);
                bool eq = lv == rv;
                if (a.l.type == VarType::Ptr) {
                    // only a comparison that finds equal addresses can be an ABA
                    if (eq && (!lval || !rval)) x.aba = true;
                    if (eq && (lval || rval)) {
                        validate(x, a.l);
                        validate(x, a.r);
                    }
                }
                return a.kind == Cond::Kind::Eq ? eq : !eq;
            }
            case Cond::Kind::Lt: return read(x, a.l).first < read(x, a.r).first;
            case Cond::Kind::Cas: {
                auto [tv, tval] = read(x, a.l);
                auto [ov, oval] = read(x, a.r);
                bool ptr = a.l.type == VarType::Ptr;
                if (tv != ov) return false;
                if (ptr && (!tval || !oval)) x.aba = true;
                if (ptr && (tval || oval)) {
                    validate(x, a.l);
                    validate(x, a.r);
                }
                auto [nv, nval] = read(x, a.t);
                write(x, a.l, nv, nval);
                return true;
            }
            case Cond::Kind::Contains: {
                Cell v = read(x, a.l).first;
                uint32_t m = mask(x.c, var_cell(a.set, x.t));
                return v >= 0 && v <= A && ((m >> v) & 1);
            }
            case Cond::Kind::IsEmpty: return mask(x.c, var_cell(a.set, x.t)) == 0;
        }
        return false;
    }

    void free_address(Ctx& x, Value a) const {
        auto& c = x.c;
        for_vars(c, [&](int i, VarType ty, const std::string&) {
            if (ty == VarType::Ptr && c[i] == a) set_valid(c, i, false);
        });
        for (Value b2 = 1; b2 <= A; ++b2)
            for (int s : ptr_sels) {
                int i = heap_cell(b2, s);
                if (c[i] == a) set_valid(c, i, false);
            }
        for (int s = 0; s < nsel; ++s) {
            int i = heap_cell(a, s);
            c[i] = kBot;
            set_valid(c, i, false);
        }
        set_mask(c, kFreedMask, mask(c, kFreedMask) | (1u << a));
        set_mask(c, kPendingMask, mask(c, kPendingMask) & ~(1u << a));
    }

    std::vector<Value> malloc_candidates(const std::vector<Cell>& c) const {
        uint32_t fresh = mask(c, kFreshMask), freed = mask(c, kFreedMask);
        if (opt.mgc) freed &= ~((1u << (opt.pool + 1)) - 1);  // client addresses stay with the client
        std::set<Value> out;
        Value star = b.reusable;
        switch (b.mode) {
            case ReuseMode::Full:
                for (Value a = 1; a <= A; ++a)
                    if ((fresh >> a) & 1) {
                        out.insert(a);
                        break;
                    }
                for (Value a = 1; a <= A; ++a)
                    if ((freed >> a) & 1) out.insert(a);
                break;
            case ReuseMode::One:
                for (Value a = 1; a <= A; ++a)
                    if (a != star && ((fresh >> a) & 1)) {
                        out.insert(a);
                        break;
                    }
                if (star >= 1 && star <= A && (((fresh | freed) >> star) & 1)) out.insert(star);
                break;
            case ReuseMode::None:
                for (Value a = 1; a <= A; ++a)
                    if ((fresh >> a) & 1) {
                        out.insert(a);
                        break;
                    }
                break;
        }
        return {out.begin(), out.end()};
    }

    void do_malloc(Ctx& x, Value a, const std::vector<Cell>& data) const {
        auto& c = x.c;
        set_mask(c, kFreshMask, mask(c, kFreshMask) & ~(1u << a));
        set_mask(c, kFreedMask, mask(c, kFreedMask) & ~(1u << a));
        for (int s : ptr_sels) {
            c[heap_cell(a, s)] = kSeg;
            set_valid(c, heap_cell(a, s), true);
        }
        for (size_t i = 0; i < data_sels.size(); ++i) c[heap_cell(a, data_sels[i])] = data[i];
    }

    std::vector<std::vector<Cell>> data_inits() const {
        std::vector<std::vector<Cell>> out{{}};
        for (size_t i = 0; i < data_sels.size(); ++i) {
            std::vector<std::vector<Cell>> next;
            for (auto& v : out)
                for (int d = 0; d <= b.dom_max(); ++d) {
                    next.push_back(v);
                    next.back().push_back(static_cast<Cell>(d));
                }
            out = std::move(next);
        }
        return out;
    }

    bool racy_exact(Ctx& x, const Instr& in, const std::vector<Value>& vals, const std::vector<bool>& ok) const {
        ConfigId cfg = get32(x.c, kSmrCfg);
        uint32_t okmask = 0;
        for (size_t i = 0; i < ok.size(); ++i) okmask |= uint32_t(ok[i]) << i;
        std::tuple<ConfigId, EventId, uint32_t> key{cfg, smr->event_id(Event{in.name, vals}), okmask};
        {
            std::lock_guard l(racy_mu);
            if (auto it = racy_memo.find(key); it != racy_memo.end()) return it->second;
        }
        bool r = racy_exact_uncached(cfg, in, vals, ok);
        std::lock_guard l(racy_mu);
        racy_memo.emplace(key, r);
        return r;
    }

    bool racy_exact_uncached(ConfigId cfg, const Instr& in, const std::vector<Value>& vals,
                             const std::vector<bool>& ok) const {
        std::vector<Value> adrs;
        for (int a = 0; a <= A; ++a) adrs.push_back(a);
        adrs.push_back(smrmc::kFresh);
        Event actual{in.name, vals};
        ConfigId after = smr->step(cfg, actual);
        for (Value cc : adrs) {
            if (cc == 0) continue;
            // b ranges over argument vectors agreeing with the actual one on valid
            // arguments and on arguments equal to c
            std::vector<std::vector<Value>> choices;
            for (size_t i = 0; i < vals.size(); ++i) {
                bool ptr = i > 0 && in.args[i - 1].type == VarType::Ptr;
                if (!ptr || ok[i] || vals[i] == cc) choices.push_back({vals[i]});
                else choices.push_back(adrs);
            }
            std::vector<Value> cur(vals.size());
            bool racy = false;
            std::function<void(size_t)> rec = [&](size_t i) {
                if (racy) return;
                if (i == vals.size()) {
                    if (cur == vals) return;
                    ConfigId alt = smr->step(cfg, Event{in.name, cur});
                    if (!smr->freeable_included(alt, after, cc)) racy = true;
                    return;
                }
                for (Value v : choices[i]) {
                    cur[i] = v;
                    rec(i + 1);
                }
            };
            rec(0);
            if (racy) return true;
        }
        return false;
    }

    void do_enter(Ctx& x, const std::string& name, const std::vector<Value>& vals, const std::vector<bool>& ok,
                  const Instr* in) const {
        if (in && !in->nested) {
            bool invalid = false;
            for (size_t i = 1; i < vals.size(); ++i)
                if (!ok[i]) invalid = true;
            x.racy_fast = invalid && name == "retire";
            if (!invalid) x.racy_exact = 0;
            else if (opt.exact_race_check || !opt.fast_race_check) x.racy_exact = racy_exact(x, *in, vals, ok);
            bool racy = opt.fast_race_check ? x.racy_fast == 1 : x.racy_exact == 1;
            if (racy) set_fault(x, Fault::RacyCall, "racy call " + to_string(Event{name, vals}));
        }
        if (name == "retire") {
            for (size_t i = 1; i < vals.size(); ++i) {
                bool ptr = in ? in->args[i - 1].type == VarType::Ptr : true;
                if (!ptr || vals[i] == 0 || vals[i] == smrmc::kFresh) continue;
                uint32_t pend = mask(x.c, kPendingMask);
                if ((pend >> vals[i]) & 1)
                    set_fault(x, Fault::DoubleRetire, "double retire of " + show_ptr(static_cast<Cell>(vals[i])));
                set_mask(x.c, kPendingMask, pend | (1u << vals[i]));
                break;
            }
        }
        emit(x, Event{name, vals});
    }

    void reset_frame(std::vector<Cell>& c, int t) const {
        for (int i = 0; i < nframe; ++i) {
            c[frame_cell(t, i)] = 0;
            set_valid(c, frame_cell(t, i), false);
        }
    }

    void init_frame(std::vector<Cell>& c, int t, const Code& code) const {
        reset_frame(c, t);
        for (size_t i = 0; i < code.frame.size(); ++i)
            if (code.frame[i] == VarType::Ptr) {
                c[frame_cell(t, static_cast<int>(i))] = kSeg;
                set_valid(c, frame_cell(t, static_cast<int>(i)), true);
            }
    }

    void finish(Ctx& x) const {
        reset_frame(x.c, x.t);
        x.c[pc_cell(x.t)] = -1;
        x.c[op_cell(x.t)] = -1;
        ++x.c[done_cell(x.t)];
    }

    // follows jumps and atomic ends; finishes the operation at its end unless
    // the end emits an exit event
    void normalize(Ctx& x, bool fold_end) const {
        for (int guard = 0; guard < 100000; ++guard) {
            int pc = x.c[pc_cell(x.t)];
            if (pc < 0) return;
            const Instr& in = code_of(x.c, x.t)->instrs[pc];
            if (in.op == Op::Jump) {
                x.c[pc_cell(x.t)] = static_cast<Cell>(in.next);
            } else if (in.op == Op::AtomicEnd) {
                x.c[kOwner] = -1;
                x.c[pc_cell(x.t)] = static_cast<Cell>(in.next);
            } else if (in.op == Op::End && fold_end) {
                finish(x);
                return;
            } else {
                return;
            }
        }
        throw std::runtime_error("loop without statements in " + code_of(x.c, x.t)->name);
    }

    void go(Ctx& x, int target, bool fold_end, std::vector<std::pair<int, Ctx>>& out, int choice) const {
        x.c[pc_cell(x.t)] = static_cast<Cell>(target);
        if (x.fault == Fault::None) normalize(x, fold_end);
        out.emplace_back(choice, std::move(x));
    }

    void exec(const Ctx& base, const Instr& in, bool fold_end, std::vector<std::pair<int, Ctx>>& out) const {
        Ctx x = base;
        switch (in.op) {
            case Op::Assign: {
                if (in.b.kind == Operand::Kind::New) {
                    auto cands = malloc_candidates(x.c);
                    if (cands.empty()) {
                        set_fault(x, Fault::Exhausted, "no address available for allocation");
                        out.emplace_back(0, std::move(x));
                        return;
                    }
                    auto inits = data_inits();
                    int choice = 0;
                    for (Value a : cands)
                        for (auto& d : inits) {
                            Ctx y = x;
                            do_malloc(y, a, d);
                            write(y, in.a, static_cast<Cell>(a), true);
                            go(y, in.next, fold_end, out, choice++);
                        }
                    return;
                }
                if (in.b.kind == Operand::Kind::Pick) {
                    uint32_t m = mask(x.c, var_cell(in.b.var, x.t));
                    for (int v = 0; v <= A; ++v)
                        if ((m >> v) & 1) {
                            Ctx y = x;
                            write(y, in.a, static_cast<Cell>(v), true);
                            go(y, in.next, fold_end, out, v);
                        }
                    return;
                }
                auto [v, val] = read(x, in.b);
                if (x.fault != Fault::Segfault) write(x, in.a, v, val);
                go(x, in.next, fold_end, out, 0);
                return;
            }
            case Op::Branch: {
                if (in.cond.kind == Cond::Kind::Star) {
                    Ctx y = x;
                    go(y, in.next, fold_end, out, 0);
                    go(x, in.alt, fold_end, out, 1);
                    return;
                }
                bool r = eval(x, in.cond);
                go(x, r ? in.next : in.alt, fold_end, out, r ? 0 : 1);
                return;
            }
            case Op::Cas: {
                bool r = eval(x, in.cond);
                go(x, in.next, fold_end, out, r ? 0 : 1);
                return;
            }
            case Op::Assume: {
                bool r = eval(x, in.cond);
                if (r || x.fault != Fault::None) go(x, in.next, fold_end, out, 0);
                return;
            }
            case Op::Assert: {
                bool r = eval(x, in.cond);
                if (!r) set_fault(x, Fault::AssertionFailure, "assertion failed: " + in.text);
                go(x, in.next, fold_end, out, 0);
                return;
            }
            case Op::Lin: {
                Event e{in.name, {}};
                if (!in.args.empty()) {
                    Cell v = read(x, in.args[0]).first;
                    if (v == kEmpty) e.kind += "_empty";
                    else e.args.push_back(v);
                } else {
                    e.kind += "_empty";
                }
                if (lin) {
                    ConfigId cfg = lin->step(get32(x.c, kLinCfg), e);
                    set32(x.c, kLinCfg, cfg);
                    if (lin->accepting(cfg))
                        set_fault(x, Fault::NotLinearizable, "linearization " + to_string(e) + " violates the specification");
                }
                go(x, in.next, fold_end, out, 0);
                return;
            }
            case Op::Enter: {
                std::vector<Value> vals{x.t};
                std::vector<bool> ok{true};
                for (auto& a : in.args) {
                    auto [v, val] = read(x, a);
                    if (a.type == VarType::Ptr && !(v == kNull || is_adr(v))) return;
                    vals.push_back(v);
                    ok.push_back(val);
                }
                do_enter(x, in.name, vals, ok, &in);
                go(x, in.next, fold_end, out, 0);
                return;
            }
            case Op::Exit:
            case Op::End:
                emit(x, Event{"exit", {x.t}});
                if (in.op == Op::End) {
                    finish(x);
                    out.emplace_back(0, std::move(x));
                    return;
                }
                go(x, in.next, fold_end, out, 0);
                return;
            case Op::Free: {
                auto [v, val] = read(x, in.a);
                (void)val;
                if (v != kNull) {
                    if (!is_adr(v)) {
                        set_fault(x, Fault::Segfault, "free of " + show_ptr(v));
                    } else {
                        emit(x, Event{"free", {v}});
                        free_address(x, v);
                    }
                }
                go(x, in.next, fold_end, out, 0);
                return;
            }
            case Op::SetAdd:
            case Op::SetRemove: {
                int cell = var_cell(in.set, x.t);
                Cell v = read(x, in.a).first;
                if (v >= 0 && v <= A) {
                    uint32_t m = mask(x.c, cell);
                    set_mask(x.c, cell, in.op == Op::SetAdd ? (m | (1u << v)) : (m & ~(1u << v)));
                }
                go(x, in.next, fold_end, out, 0);
                return;
            }
            case Op::SetClear:
                set_mask(x.c, var_cell(in.set, x.t), 0);
                go(x, in.next, fold_end, out, 0);
                return;
            case Op::SetCopy:
                set_mask(x.c, var_cell(in.set, x.t), mask(x.c, var_cell(in.set2, x.t)));
                go(x, in.next, fold_end, out, 0);
                return;
            case Op::PopMin: {
                int cell = var_cell(in.set, x.t);
                uint32_t m = mask(x.c, cell);
                int v = 0;
                while (v <= A && !((m >> v) & 1)) ++v;
                set_mask(x.c, cell, m & ~(1u << v));
                write(x, in.a, static_cast<Cell>(v), true);
                go(x, in.next, fold_end, out, 0);
                return;
            }
            case Op::Jump:
            case Op::AtomicBegin:
            case Op::AtomicEnd: throw std::logic_error("control instruction executed as a step");
        }
    }

    Step make_step(Action act, Ctx&& x, const std::string& op, int line, int pc) const {
        Step s;
        s.action = act;
        s.next = State(x.c.begin(), x.c.end());
        s.fault = x.fault;
        s.detail = std::move(x.detail);
        s.op = op;
        s.line = line;
        s.pc = pc;
        s.aba_prone = x.aba;
        s.racy_exact = x.racy_exact;
        s.racy_fast = x.racy_fast;
        s.events = std::move(x.events);
        return s;
    }

    void thread_steps(const std::vector<Cell>& c, int t, std::vector<Step>& out) const {
        int owner = c[kOwner];
        if (owner >= 0 && owner != t) return;
        Ctx x;
        x.c = c;
        x.t = t;
        int pc = c[pc_cell(t)];
        if (pc < 0) {
            if (owner >= 0 || c[done_cell(t)] >= b.ops) return;
            if (opt.mgc) {
                uint32_t pend = mask(c, kPendingMask);
                for (size_t e = 0; e < entries.size(); ++e) {
                    auto& en = entries[e];
                    const Code& code = codes[en.code];
                    if (code.name == "retire" && !en.args.empty() && ((pend >> en.args[0]) & 1)) continue;
                    Ctx y = x;
                    y.c[op_cell(t)] = static_cast<Cell>(en.code);
                    y.c[pc_cell(t)] = 0;
                    init_frame(y.c, t, code);
                    std::vector<Value> vals{t};
                    std::vector<bool> ok{true};
                    for (size_t i = 0; i < code.params.size(); ++i) {
                        int cell = var_cell(code.params[i], t);
                        y.c[cell] = en.args[i];
                        if (code.params[i].type == VarType::Ptr) {
                            set_valid(y.c, cell, true);
                            // the client hands out its address again: it was reallocated
                            if (is_adr(en.args[i]))
                                set_mask(y.c, kFreedMask, mask(y.c, kFreedMask) & ~(1u << en.args[i]));
                        }
                        vals.push_back(en.args[i]);
                        ok.push_back(true);
                    }
                    if (code.has_requires && !eval(y, code.requires_)) continue;
                    y.aba = false;
                    do_enter(y, code.name, vals, ok, nullptr);
                    normalize(y, false);
                    out.push_back(make_step({Action::Kind::Start, t, static_cast<int>(e)}, std::move(y), code.name,
                                            prog.operation(code.name)->line, -1));
                }
            } else {
                for (size_t e = 0; e < api.size(); ++e) {
                    const Code& code = codes[api[e]];
                    Ctx y = x;
                    y.c[op_cell(t)] = static_cast<Cell>(api[e]);
                    y.c[pc_cell(t)] = 0;
                    init_frame(y.c, t, code);
                    for (auto& v : code.params) {
                        if (v.type != VarType::Data) continue;
                        Cell in = ++y.c[kInput];
                        y.c[var_cell(v, t)] = in;
                    }
                    normalize(y, true);
                    out.push_back(make_step({Action::Kind::Start, t, static_cast<int>(e)}, std::move(y), code.name,
                                            prog.operation(code.name)->line, -1));
                }
            }
            return;
        }
        const Code& code = codes[c[op_cell(t)]];
        if (code.instrs[pc].op == Op::AtomicBegin) {
            x.c[kOwner] = static_cast<Cell>(t);
            x.c[pc_cell(t)] = static_cast<Cell>(code.instrs[pc].next);
            normalize(x, !opt.mgc);
            pc = x.c[pc_cell(t)];
            if (pc < 0) {
                out.push_back(make_step({Action::Kind::Step, t, 0}, std::move(x), code.name, code.instrs.back().line, -1));
                return;
            }
        }
        const Instr& in = code.instrs[pc];
        std::vector<std::pair<int, Ctx>> alts;
        exec(x, in, !opt.mgc, alts);
        for (auto& [choice, y] : alts)
            out.push_back(make_step({Action::Kind::Step, t, choice}, std::move(y), code.name, in.line, pc));
    }

    void env_frees(const std::vector<Cell>& c, std::vector<Step>& out) const {
        if (opt.mgc || c[kOwner] >= 0) return;
        uint32_t fresh = mask(c, kFreshMask);
        ConfigId cfg = get32(c, kSmrCfg);
        for (Value a = 1; a <= A; ++a) {
            if ((fresh >> a) & 1) continue;
            Event e{"free", {a}};
            ConfigId next = smr->step(cfg, e);
            if (smr->accepting(next)) continue;
            Ctx x;
            x.c = c;
            x.t = -1;
            set32(x.c, kSmrCfg, next);
            x.events.push_back(e);
            free_address(x, a);
            out.push_back(make_step({Action::Kind::Free, -1, a}, std::move(x), "", 0, -1));
        }
    }

    std::vector<Cell> cells(const State& s) const {
        if (static_cast<int>(s.size()) != ncells) throw std::invalid_argument("state does not belong to this machine");
        return std::vector<Cell>(s.begin(), s.end());
    }

    std::string instr_text(int op, int pc) const {
        if (op < 0 || pc < 0) return "idle";
        auto& in = codes[op].instrs[pc];
        return codes[op].name + ":" + std::to_string(in.line) + " " + in.text;
    }

    // ---- canonical similarity keys

    std::string key(const std::vector<Cell>& c, Value mark, std::vector<int>* labels_out) const {
        std::string prefix;
        auto put = [](std::string& s, Cell v) {
            s.push_back(static_cast<char>(v & 0xff));
            s.push_back(static_cast<char>((v >> 8) & 0xff));
        };
        put(prefix, c[kOwner]);
        for (int t = 0; t < N; ++t) {
            put(prefix, c[pc_cell(t)]);
            put(prefix, c[op_cell(t)]);
            put(prefix, c[done_cell(t)]);
        }
        std::vector<int> roots;
        for_vars(c, [&](int i, VarType ty, const std::string&) {
            if (ty == VarType::Ptr) roots.push_back(i);
            else put(prefix, c[i]);
        });
        std::vector<bool> img = image(c);
        std::vector<bool> owner(A + 1, false);
        for (Value a = 1; a <= A; ++a)
            for (int s : ptr_sels)
                if (valid(c, heap_cell(a, s))) owner[a] = true;

        std::string best;
        std::vector<int> best_labels;
        bool have = false;
        std::vector<int> lab(A + 1, -1);
        std::function<void(std::string, std::vector<int>, std::vector<Value>, int)> search =
            [&](std::string out, std::vector<int> lab, std::vector<Value> queue, int next) {
                auto enc = [&](Cell v) {
                    if (v == kNull) out += 'N';
                    else if (v == kSeg) out += 'S';
                    else if (v == kBot) out += 'B';
                    else if (is_adr(v)) {
                        if (lab[v] < 0) {
                            lab[v] = next++;
                            queue.push_back(v);
                        }
                        out += static_cast<char>('a' + lab[v]);
                        if (v == mark) out += '*';
                    } else {
                        out += '?';
                    }
                };
                size_t qi = 0;
                while (true) {
                    for (; qi < queue.size(); ++qi) {
                        Value a = queue[qi];
                        out += '[';
                        for (int s : ptr_sels) {
                            int i = heap_cell(a, s);
                            if (valid(c, i)) enc(c[i]);
                            else out += '-';
                        }
                        if (img[a])
                            for (int s : data_sels) {
                                out += ':';
                                out += std::to_string(c[heap_cell(a, s)]);
                            }
                        out += ']';
                    }
                    std::vector<Value> left;
                    for (Value a = 1; a <= A; ++a)
                        if (owner[a] && lab[a] < 0) left.push_back(a);
                    if (left.empty()) break;
                    if (left.size() == 1) {
                        out += '+';
                        enc(static_cast<Cell>(left[0]));
                        continue;
                    }
                    for (Value a : left) {
                        auto o2 = out + '+';
                        auto lab2 = lab;
                        auto q2 = std::vector<Value>(queue.begin() + static_cast<long>(qi), queue.end());
                        lab2[a] = next;
                        q2.push_back(a);
                        o2 += static_cast<char>('a' + next);
                        if (a == mark) o2 += '*';
                        search(o2, lab2, q2, next + 1);
                    }
                    return;
                }
                if (!have || out < best) {
                    best = out;
                    best_labels = lab;
                    have = true;
                }
            };
        std::string out;
        std::vector<Value> queue;
        int next = 0;
        for (int i : roots) {
            if (!valid(c, i)) {
                out += '-';
                continue;
            }
            Cell v = c[i];
            if (is_adr(v)) {
                if (lab[v] < 0) {
                    lab[v] = next++;
                    queue.push_back(v);
                }
                out += static_cast<char>('a' + lab[v]);
                if (v == mark) out += '*';
            } else {
                out += v == kNull ? 'N' : v == kSeg ? 'S' : v == kBot ? 'B' : '?';
            }
        }
        search(out, lab, queue, next);
        if (labels_out) *labels_out = best_labels;
        return prefix + '|' + best;
    }
};

// ------------------------------------------------------------ Machine

Machine::Machine(const Program& p, const Observer& smr, std::optional<Observer> lin, Bounds b, MachineOptions o)
    : impl_(std::make_unique<Impl>()) {
    impl_->b = b;
    impl_->opt = std::move(o);
    impl_->build(p);
    impl_->smr = std::make_unique<ObserverRuntime>(smr, impl_->smr_universe());
    if (lin) impl_->lin = std::make_unique<ObserverRuntime>(*lin, impl_->lin_universe());
}

Machine::~Machine() = default;

const Bounds& Machine::bounds() const { return impl_->b; }
const MachineOptions& Machine::options() const { return impl_->opt; }
const Program& Machine::program() const { return impl_->prog; }
ObserverRuntime& Machine::smr_runtime() const { return *impl_->smr; }
ObserverRuntime* Machine::lin_runtime() const { return impl_->lin.get(); }

std::vector<State> Machine::initial_states() const {
    auto& m = *impl_;
    std::vector<Cell> c(m.ncells, 0);
    c[kOwner] = -1;
    Impl::set32(c, kSmrCfg, m.smr->initial());
    Impl::set32(c, kLinCfg, m.lin ? m.lin->initial() : 0);
    uint32_t fresh = 0;
    for (int a = 1; a <= m.A; ++a)
        if (!m.opt.mgc || a > m.opt.pool) fresh |= 1u << a;
    Impl::set_mask(c, kFreshMask, fresh);
    auto init_var = [&](int cell, VarType t) {
        if (t != VarType::Ptr) return;
        c[cell] = kSeg;
        m.set_valid(c, cell, true);
    };
    for (size_t i = 0; i < m.prog.shared.size(); ++i) init_var(m.s0 + static_cast<int>(i), m.prog.shared[i].type);
    for (int t = 0; t < m.N; ++t) {
        c[m.pc_cell(t)] = -1;
        c[m.op_cell(t)] = -1;
        for (int i = 0; i < m.ntl; ++i) init_var(m.tl_cell(t, i), m.prog.threadlocal[i].type);
    }
    for (int i = m.h0; i < m.v0; ++i) c[i] = kBot;

    Impl::Ctx x;
    x.c = std::move(c);
    x.t = 0;
    const Code& code = m.codes[m.init_code];
    x.c[m.op_cell(0)] = static_cast<Cell>(m.init_code);
    x.c[m.pc_cell(0)] = 0;
    m.init_frame(x.c, 0, code);
    m.normalize(x, true);
    // Only the allocated address branches: with a distinguished reusable
    // address, init may or may not hand it out at each allocation.
    const size_t ndata = m.data_inits().size();
    std::vector<State> out;
    std::set<State> seen;
    std::vector<Impl::Ctx> work{std::move(x)};
    for (int steps = 0; !work.empty(); ++steps) {
        if (steps > 100000) throw std::runtime_error("init does not terminate");
        Impl::Ctx y = std::move(work.back());
        work.pop_back();
        if (y.c[m.pc_cell(0)] < 0) {
            y.c[m.done_cell(0)] = 0;
            y.c[kOwner] = -1;
            State st(y.c.begin(), y.c.end());
            if (seen.insert(st).second) out.push_back(std::move(st));
            continue;
        }
        const Instr& in = code.instrs[y.c[m.pc_cell(0)]];
        if (in.op == Op::AtomicBegin) {
            y.c[m.pc_cell(0)] = static_cast<Cell>(in.next);
            m.normalize(y, true);
            work.push_back(std::move(y));
            continue;
        }
        std::vector<std::pair<int, Impl::Ctx>> alts;
        m.exec(y, in, true, alts);
        if (alts.empty()) throw std::runtime_error("init blocks at line " + std::to_string(in.line));
        bool alloc = in.op == Op::Assign && in.b.kind == Operand::Kind::New;
        if (alts.size() > 1 && !alloc)
            throw std::runtime_error("init is nondeterministic at line " + std::to_string(in.line));
        // reverse, so the first alternative is explored first
        for (auto it = alts.rbegin(); it != alts.rend(); ++it) {
            if (alloc && it->first % static_cast<int>(ndata) != 0) continue;
            if (it->second.fault != Fault::None)
                throw std::runtime_error("init fails at line " + std::to_string(in.line) + ": " + it->second.detail);
            work.push_back(std::move(it->second));
        }
    }
    return out;
}

State Machine::initial() const { return initial_states().front(); }

std::vector<Step> Machine::successors(const State& s) const {
    auto c = impl_->cells(s);
    std::vector<Step> out;
    for (int t = 0; t < impl_->N; ++t) impl_->thread_steps(c, t, out);
    impl_->env_frees(c, out);
    return out;
}

std::vector<Step> Machine::thread_successors(const State& s, int t) const {
    auto c = impl_->cells(s);
    std::vector<Step> out;
    impl_->thread_steps(c, t, out);
    return out;
}

std::optional<Step> Machine::apply(const State& s, const Action& a) const {
    auto c = impl_->cells(s);
    std::vector<Step> out;
    if (a.kind == Action::Kind::Free) impl_->env_frees(c, out);
    else if (a.thread >= 0 && a.thread < impl_->N) impl_->thread_steps(c, a.thread, out);
    for (auto& st : out)
        if (st.action == a) return std::move(st);
    return std::nullopt;
}

bool Machine::admissible(const State& s) const {
    auto& m = *impl_;
    if (!m.opt.dglm_hint) return true;
    auto c = m.cells(s);
    int head = -1, tail = -1;
    for (size_t i = 0; i < m.prog.shared.size(); ++i) {
        if (m.prog.shared[i].name == "Head") head = m.s0 + static_cast<int>(i);
        if (m.prog.shared[i].name == "Tail") tail = m.s0 + static_cast<int>(i);
    }
    auto it = m.sels.index.find("next");
    if (head < 0 || tail < 0 || it == m.sels.index.end()) return true;
    int next = it->second;
    Cell h = c[head], t = c[tail];
    Cell cur = h;
    for (int i = 0; i <= m.A && m.is_adr(cur); ++i) {
        if (cur == t) return true;
        cur = c[m.heap_cell(cur, next)];
    }
    return m.is_adr(t) && c[m.heap_cell(t, next)] == h;
}

int Machine::pc(const State& s, int t) const { return static_cast<int16_t>(s[impl_->pc_cell(t)]); }
int Machine::op(const State& s, int t) const { return static_cast<int16_t>(s[impl_->op_cell(t)]); }
int Machine::ops_done(const State& s, int t) const { return static_cast<int16_t>(s[impl_->done_cell(t)]); }
std::string Machine::op_name(int op) const { return op < 0 ? "" : impl_->codes.at(op).name; }
int Machine::op_statements(int op) const { return op < 0 ? 0 : impl_->codes.at(op).statements; }

ConfigId Machine::smr_config(const State& s) const { return Impl::get32(impl_->cells(s), kSmrCfg); }
ConfigId Machine::lin_config(const State& s) const { return Impl::get32(impl_->cells(s), kLinCfg); }
uint32_t Machine::fresh(const State& s) const { return static_cast<uint16_t>(s[kFreshMask]); }
uint32_t Machine::freed(const State& s) const { return static_cast<uint16_t>(s[kFreedMask]); }
uint32_t Machine::pending(const State& s) const { return static_cast<uint16_t>(s[kPendingMask]); }

std::string Machine::control_key(const State& s) const {
    std::string k;
    auto put = [&](char16_t v) {
        k.push_back(static_cast<char>(v & 0xff));
        k.push_back(static_cast<char>(v >> 8));
    };
    put(s[kOwner]);
    for (int t = 0; t < impl_->N; ++t) {
        put(s[impl_->pc_cell(t)]);
        put(s[impl_->op_cell(t)]);
        put(s[impl_->done_cell(t)]);
    }
    return k;
}

ValidMemory Machine::restrict_valid(const State& s) const {
    auto& m = *impl_;
    auto c = m.cells(s);
    ValidMemory r;
    m.for_vars(c, [&](int i, VarType ty, const std::string& name) {
        if (ty != VarType::Ptr || m.valid(c, i)) r.cells.emplace_back(name, c[i]);
    });
    std::vector<bool> img = m.image(c);
    for (Value a = 1; a <= m.A; ++a) {
        std::string pre = "@" + std::to_string(a) + ".";
        for (int sel : m.ptr_sels)
            if (m.valid(c, m.heap_cell(a, sel))) r.cells.emplace_back(pre + m.sels.names[sel], c[m.heap_cell(a, sel)]);
        if (img[a])
            for (int sel : m.data_sels) r.cells.emplace_back(pre + m.sels.names[sel], c[m.heap_cell(a, sel)]);
    }
    std::sort(r.cells.begin(), r.cells.end());
    return r;
}

std::vector<Value> Machine::restriction_addresses(const State& s) const {
    auto& m = *impl_;
    auto c = m.cells(s);
    std::vector<bool> in = m.image(c);
    for (Value a = 1; a <= m.A; ++a)
        for (int sel : m.ptr_sels)
            if (m.valid(c, m.heap_cell(a, sel))) in[a] = true;
    std::vector<Value> out;
    for (Value a = 1; a <= m.A; ++a)
        if (in[a]) out.push_back(a);
    return out;
}

std::vector<Value> Machine::valid_image(const State& s) const {
    auto img = impl_->image(impl_->cells(s));
    std::vector<Value> out;
    for (Value a = 1; a <= impl_->A; ++a)
        if (img[a]) out.push_back(a);
    return out;
}

std::vector<Cell> Machine::pointer_variables(const State& s) const {
    auto c = impl_->cells(s);
    std::vector<Cell> out;
    impl_->for_vars(c, [&](int i, VarType ty, const std::string&) {
        if (ty == VarType::Ptr) out.push_back(c[i]);
    });
    return out;
}

std::vector<int> Machine::pointer_selectors() const { return impl_->ptr_sels; }

Cell Machine::selector(const State& s, Value a, int sel) const {
    return static_cast<Cell>(s.at(impl_->heap_cell(a, sel)));
}

bool Machine::similar(const State& a, const State& b) const {
    return control_key(a) == control_key(b) && restrict_valid(a) == restrict_valid(b);
}

bool Machine::mem_equiv(const State& s1, const State& s2, Value adr) const {
    auto& m = *impl_;
    auto p1 = pointer_variables(s1), p2 = pointer_variables(s2);
    if (p1.size() != p2.size()) return false;
    for (size_t i = 0; i < p1.size(); ++i)
        if ((p1[i] == adr) != (p2[i] == adr)) return false;
    auto c1 = m.cells(s1), c2 = m.cells(s2);
    std::vector<bool> i1 = m.image(c1), i2 = m.image(c2);
    for (Value b = 1; b <= m.A; ++b) {
        if (!i1[b] && !i2[b]) continue;
        for (int sel : m.ptr_sels)
            if ((c1[m.heap_cell(b, sel)] == adr) != (c2[m.heap_cell(b, sel)] == adr)) return false;
    }
    uint32_t gone1 = fresh(s1) | freed(s1), gone2 = fresh(s2) | freed(s2);
    if (((gone1 >> adr) & 1) != ((gone2 >> adr) & 1)) return false;
    return m.smr->freeable_included(smr_config(s1), smr_config(s2), adr);
}

bool Machine::behavior_included(const State& s1, const State& s2) const {
    ConfigId c1 = smr_config(s1), c2 = smr_config(s2);
    for (Value a : restriction_addresses(s1))
        if (!impl_->smr->freeable_included(c1, c2, a)) return false;
    return true;
}

std::string Machine::similarity_key(const State& s, std::vector<int>* labels) const {
    return impl_->key(impl_->cells(s), -100, labels);
}

std::string Machine::marked_key(const State& s, Value mark, std::vector<int>* labels) const {
    return impl_->key(impl_->cells(s), mark, labels);
}

std::vector<std::string> Machine::check_invariants(const State& s) const {
    auto& m = *impl_;
    auto c = m.cells(s);
    std::vector<std::string> bad;
    uint32_t fr = fresh(s), fd = this->freed(s);
    if (fr & fd) bad.push_back("fresh-freed-disjoint");
    bool unref = true, never_valid = true, seg = true;
    auto check_ptr = [&](int i) {
        Cell v = c[i];
        if (m.is_adr(v) && ((fr >> v) & 1)) unref = false;
        if (m.valid(c, i) && m.is_adr(v) && ((fd >> v) & 1)) never_valid = false;
        if (v == kSeg && !m.valid(c, i)) seg = false;
    };
    m.for_vars(c, [&](int i, VarType ty, const std::string&) {
        if (ty == VarType::Ptr) check_ptr(i);
    });
    for (Value a = 1; a <= m.A; ++a) {
        if ((fr >> a) & 1) {
            for (int sel = 0; sel < m.nsel; ++sel)
                if (c[m.heap_cell(a, sel)] != kBot) unref = false;
            continue;
        }
        for (int sel : m.ptr_sels) check_ptr(m.heap_cell(a, sel));
    }
    if (!unref) bad.push_back("fresh-unreferenced");
    if (!never_valid) bad.push_back("freed-never-valid");
    if (!seg) bad.push_back("seg-valid");
    return bad;
}

std::string Machine::describe(const State& s) const {
    auto& m = *impl_;
    auto c = m.cells(s);
    std::ostringstream os;
    for (int t = 0; t < m.N; ++t)
        os << "T" << t << ": " << m.instr_text(c[m.op_cell(t)], c[m.pc_cell(t)]) << " (done " << c[m.done_cell(t)]
           << ")\n";
    if (c[kOwner] >= 0) os << "atomic: T" << c[kOwner] << "\n";
    m.for_vars(c, [&](int i, VarType ty, const std::string& name) {
        os << name << " = ";
        if (ty == VarType::Ptr) os << show_ptr(c[i]) << (m.valid(c, i) ? "" : " (invalid)");
        else if (ty == VarType::Set) os << "set " << u16(c[i]);
        else os << show_data(c[i]);
        os << "\n";
    });
    for (Value a = 1; a <= m.A; ++a) {
        if ((fresh(s) >> a) & 1) continue;
        os << "a" << a << ((freed(s) >> a) & 1 ? " (freed)" : "") << ":";
        for (int sel = 0; sel < m.nsel; ++sel) {
            int i = m.heap_cell(a, sel);
            os << " " << m.sels.names[sel] << "=";
            if (m.sels.types[sel] == VarType::Ptr) os << show_ptr(c[i]) << (m.valid(c, i) ? "" : "!");
            else os << show_data(c[i]);
        }
        os << "\n";
    }
    return os.str();
}

std::vector<std::string> Machine::mgc_calls() const {
    auto& m = *impl_;
    std::vector<std::string> out;
    for (auto& e : m.entries) {
        std::string r = m.codes[e.code].name + "(";
        for (size_t i = 0; i < e.args.size(); ++i) {
            r += i ? ", " : "";
            r += m.codes[e.code].params[i].type == VarType::Ptr ? show_ptr(e.args[i]) : show_data(e.args[i]);
        }
        out.push_back(r + ")");
    }
    return out;
}

std::string Machine::describe(const Action& a, const State& before) const {
    auto& m = *impl_;
    if (a.kind == Action::Kind::Free) return "env: free(a" + std::to_string(a.choice) + ")";
    if (a.kind == Action::Kind::Init) return "init #" + std::to_string(a.choice);
    auto c = m.cells(before);
    std::string who = "T" + std::to_string(a.thread) + ": ";
    if (a.kind == Action::Kind::Start) {
        if (m.opt.mgc) {
            auto& e = m.entries.at(a.choice);
            std::string r = who + "call " + m.codes[e.code].name + "(";
            for (size_t i = 0; i < e.args.size(); ++i) {
                r += i ? ", " : "";
                r += m.codes[e.code].params[i].type == VarType::Ptr ? show_ptr(e.args[i]) : show_data(e.args[i]);
            }
            return r + ")";
        }
        return who + "start " + m.codes[m.api.at(a.choice)].name;
    }
    int op = c[m.op_cell(a.thread)], pc = c[m.pc_cell(a.thread)];
    if (op >= 0 && pc >= 0 && m.codes[op].instrs[pc].op == Op::AtomicBegin) {
        pc = m.codes[op].instrs[pc].next;
        while (pc >= 0 && (m.codes[op].instrs[pc].op == Op::Jump || m.codes[op].instrs[pc].op == Op::AtomicEnd))
            pc = m.codes[op].instrs[pc].next;
    }
    return who + m.instr_text(op, pc) + " [" + std::to_string(a.choice) + "]";
}

}  // namespace smrmc

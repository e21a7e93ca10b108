#include "divtime/expr.hpp"

#include <cctype>
#include <cmath>
#include <cstring>

namespace divtime {

namespace {

struct Parser {
    const std::string& s;
    std::size_t at = 0;
    Expression* out;

    explicit Parser(const std::string& src, Expression* e) : s(src), out(e) {}

    void skip() {
        while (at < s.size() && std::isspace(static_cast<unsigned char>(s[at]))) ++at;
    }
    char peek() {
        skip();
        return at < s.size() ? s[at] : '\0';
    }
    bool accept(char c) {
        if (peek() == c) {
            ++at;
            return true;
        }
        return false;
    }
    void expect(char c) {
        if (!accept(c)) throw ExprError(std::string("expected '") + c + "'", at);
    }

    void emit(Expression::Op op) { out->prog_.push_back(op); }
    void emit_const(double v) {
        out->prog_.push_back(Expression::Op::PushConst);
        out->consts_.push_back(v);
    }

    void number() {
        skip();
        std::size_t start = at;
        while (at < s.size() &&
               (std::isdigit(static_cast<unsigned char>(s[at])) || s[at] == '.')) ++at;
        if (at < s.size() && (s[at] == 'e' || s[at] == 'E')) {
            std::size_t save = at++;
            if (at < s.size() && (s[at] == '+' || s[at] == '-')) ++at;
            if (at < s.size() && std::isdigit(static_cast<unsigned char>(s[at]))) {
                while (at < s.size() && std::isdigit(static_cast<unsigned char>(s[at]))) ++at;
            } else {
                at = save;
            }
        }
        try {
            emit_const(std::stod(s.substr(start, at - start)));
        } catch (...) {
            throw ExprError("bad number", start);
        }
    }

    std::string ident() {
        skip();
        std::size_t start = at;
        while (at < s.size() && (std::isalnum(static_cast<unsigned char>(s[at])) || s[at] == '_'))
            ++at;
        return s.substr(start, at - start);
    }

    void atom() {
        skip();
        if (at >= s.size()) throw ExprError("unexpected end of input", at);
        char c = s[at];
        if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
            number();
            return;
        }
        if (c == '(') {
            std::size_t open = at;
            ++at;
            expr();
            if (!accept(')')) throw ExprError("unbalanced parenthesis", open);
            return;
        }
        if (std::isalpha(static_cast<unsigned char>(c))) {
            std::size_t start = at;
            std::string name = ident();
            if (peek() == '(') {
                ++at;
                int args = 1;
                expr();
                while (accept(',')) {
                    expr();
                    ++args;
                }
                expect(')');
                using Op = Expression::Op;
                struct Fn {
                    const char* name;
                    Op op;
                    int arity;
                };
                static const Fn fns[] = {
                    {"sin", Op::Sin, 1},  {"cos", Op::Cos, 1}, {"exp", Op::Exp, 1},
                    {"abs", Op::Abs, 1},  {"sqrt", Op::Sqrt, 1},
                    {"min", Op::Min, 2},  {"max", Op::Max, 2},
                };
                for (const Fn& f : fns) {
                    if (name == f.name) {
                        if (args != f.arity)
                            throw ExprError("function '" + name + "' takes " +
                                                std::to_string(f.arity) + " argument(s)",
                                            start);
                        emit(f.op);
                        return;
                    }
                }
                throw ExprError("unknown function '" + name + "'", start);
            }
            if (name == "pi") {
                emit_const(M_PI);
                return;
            }
            if (name == "t") {
                emit(Expression::Op::PushT);
                return;
            }
            if (name == "x") {
                emit(Expression::Op::PushX);
                return;
            }
            if (name == "y") {
                emit(Expression::Op::PushY);
                return;
            }
            if (name == "z") {
                emit(Expression::Op::PushZ);
                return;
            }
            throw ExprError("unknown identifier '" + name + "'", start);
        }
        throw ExprError("unexpected character", at);
    }

    // power := atom ('^' unary)?   (right-associative)
    void power() {
        atom();
        if (accept('^')) {
            unary();
            emit(Expression::Op::Pow);
        }
    }

    void unary() {
        skip();
        if (accept('-')) {
            unary();
            emit(Expression::Op::Neg);
            return;
        }
        if (accept('+')) {
            unary();
            return;
        }
        power();
    }

    void term() {
        unary();
        for (;;) {
            if (accept('*')) {
                unary();
                emit(Expression::Op::Mul);
            } else if (accept('/')) {
                unary();
                emit(Expression::Op::Div);
            } else {
                return;
            }
        }
    }

    void expr() {
        term();
        for (;;) {
            if (accept('+')) {
                term();
                emit(Expression::Op::Add);
            } else if (accept('-')) {
                term();
                emit(Expression::Op::Sub);
            } else {
                return;
            }
        }
    }
};

}  // namespace

Expression parse_expression(const std::string& src) {
    Expression e;
    e.src_ = src;
    Parser p(src, &e);
    p.skip();
    if (p.at >= src.size()) throw ExprError("empty expression", 0);
    p.expr();
    p.skip();
    if (p.at != src.size()) throw ExprError("trailing input", p.at);
    return e;
}

double Expression::eval(double t, const Vec& xv) const {
    double stack[64];
    int sp = 0;
    std::size_t ci = 0;
    for (Op op : prog_) {
        switch (op) {
            case Op::PushConst: stack[sp++] = consts_[ci++]; break;
            case Op::PushT: stack[sp++] = t; break;
            case Op::PushX: stack[sp++] = xv[0]; break;
            case Op::PushY: stack[sp++] = xv[1]; break;
            case Op::PushZ: stack[sp++] = xv[2]; break;
            case Op::Add: --sp; stack[sp - 1] += stack[sp]; break;
            case Op::Sub: --sp; stack[sp - 1] -= stack[sp]; break;
            case Op::Mul: --sp; stack[sp - 1] *= stack[sp]; break;
            case Op::Div: --sp; stack[sp - 1] /= stack[sp]; break;
            case Op::Pow: --sp; stack[sp - 1] = std::pow(stack[sp - 1], stack[sp]); break;
            case Op::Neg: stack[sp - 1] = -stack[sp - 1]; break;
            case Op::Sin: stack[sp - 1] = std::sin(stack[sp - 1]); break;
            case Op::Cos: stack[sp - 1] = std::cos(stack[sp - 1]); break;
            case Op::Exp: stack[sp - 1] = std::exp(stack[sp - 1]); break;
            case Op::Abs: stack[sp - 1] = std::abs(stack[sp - 1]); break;
            case Op::Sqrt: {
                double v = stack[sp - 1];
                if (v < 0) {
                    nan_flag_->store(true, std::memory_order_relaxed);
                    stack[sp - 1] = std::numeric_limits<double>::quiet_NaN();
                } else {
                    stack[sp - 1] = std::sqrt(v);
                }
                break;
            }
            case Op::Min: --sp; stack[sp - 1] = std::min(stack[sp - 1], stack[sp]); break;
            case Op::Max: --sp; stack[sp - 1] = std::max(stack[sp - 1], stack[sp]); break;
        }
    }
    double v = stack[0];
    if (std::isnan(v)) nan_flag_->store(true, std::memory_order_relaxed);
    return v;
}

}  // namespace divtime

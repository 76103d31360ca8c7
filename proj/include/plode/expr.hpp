#pragma once

// Right-hand-side expression front end. A program is one derivative
// expression per state, separated by newlines or ';'. State variables are
// x1..xn (plain "x" is accepted for a single-state system); '#' starts a
// comment; an optional "x0: v1, v2, ..." line sets initial conditions.
//
// Grammar (standard precedence, unary minus binds tighter than * /):
//   expr    := term (('+'|'-') term)*
//   term    := factor (('*'|'/') factor)*
//   factor  := '-' factor | primary
//   primary := number | ident | ident '(' expr (',' expr)* ')' | '(' expr ')'
//
// Functions: abs, min, max, sin, cos, tan, exp, log, sqrt. min/max desugar
// through the abs identity when recorded.

#include <cctype>
#include <charconv>
#include <map>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "plode/tape.hpp"

namespace plode {

class ParseError : public std::runtime_error {
public:
    ParseError(const std::string& msg, int line, int column)
        : std::runtime_error("line " + std::to_string(line) + ", column " +
                             std::to_string(column) + ": " + msg),
          line(line),
          column(column) {}
    int line;
    int column;
};

struct ExpressionProgram {
    std::vector<std::string> variables;    // x1..xn
    std::vector<std::string> expressions;  // one per state derivative
    Vec x0;                                // zeros unless an x0: line was given
};

namespace detail {

struct Token {
    enum Kind { number, ident, op, lparen, rparen, comma, end } kind = end;
    std::string text;
    double value = 0.0;
    int line = 1, column = 1;
};

class Lexer {
public:
    Lexer(const std::string& src, int line) : src_(src), line_(line) { advance(); }
    const Token& peek() const { return tok_; }
    Token next() {
        Token t = tok_;
        advance();
        return t;
    }

private:
    void advance() {
        while (pos_ < src_.size() && std::isspace(static_cast<unsigned char>(src_[pos_])))
            ++pos_;
        tok_ = Token{};
        tok_.line = line_;
        tok_.column = static_cast<int>(pos_) + 1;
        if (pos_ >= src_.size()) {
            tok_.kind = Token::end;
            return;
        }
        char c = src_[pos_];
        if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
            const char* b = src_.data() + pos_;
            const char* e = src_.data() + src_.size();
            double v = 0.0;
            auto res = std::from_chars(b, e, v);
            if (res.ec != std::errc{})
                throw ParseError("malformed number", line_, tok_.column);
            tok_.kind = Token::number;
            tok_.value = v;
            tok_.text.assign(b, res.ptr);
            pos_ += static_cast<std::size_t>(res.ptr - b);
            return;
        }
        if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
            std::size_t s = pos_;
            while (pos_ < src_.size() &&
                   (std::isalnum(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '_'))
                ++pos_;
            tok_.kind = Token::ident;
            tok_.text = src_.substr(s, pos_ - s);
            return;
        }
        switch (c) {
            case '+': case '-': case '*': case '/':
                tok_.kind = Token::op;
                tok_.text = c;
                break;
            case '(': tok_.kind = Token::lparen; break;
            case ')': tok_.kind = Token::rparen; break;
            case ',': tok_.kind = Token::comma; break;
            default:
                throw ParseError(std::string("unexpected character '") + c + "'", line_,
                                 tok_.column);
        }
        ++pos_;
    }

    const std::string& src_;
    std::size_t pos_ = 0;
    int line_;
    Token tok_;
};

class ExprParser {
public:
    ExprParser(const std::string& src, int line, TapeBuilder& tb,
               const std::map<std::string, NodeRef>& vars)
        : lex_(src, line), tb_(tb), vars_(vars) {}

    NodeRef parse() {
        NodeRef r = expr();
        const Token& t = lex_.peek();
        if (t.kind != Token::end)
            throw ParseError("unexpected trailing input '" + t.text + "'", t.line, t.column);
        return r;
    }

private:
    NodeRef expr() {
        NodeRef lhs = term();
        while (lex_.peek().kind == Token::op &&
               (lex_.peek().text == "+" || lex_.peek().text == "-")) {
            Token op = lex_.next();
            NodeRef rhs = term();
            lhs = op.text == "+" ? tb_.add(lhs, rhs) : tb_.sub(lhs, rhs);
        }
        return lhs;
    }
    NodeRef term() {
        NodeRef lhs = factor();
        while (lex_.peek().kind == Token::op &&
               (lex_.peek().text == "*" || lex_.peek().text == "/")) {
            Token op = lex_.next();
            NodeRef rhs = factor();
            lhs = op.text == "*" ? tb_.mul(lhs, rhs) : tb_.div(lhs, rhs);
        }
        return lhs;
    }
    NodeRef factor() {
        if (lex_.peek().kind == Token::op && lex_.peek().text == "-") {
            lex_.next();
            return tb_.neg(factor());
        }
        return primary();
    }
    NodeRef primary() {
        Token t = lex_.next();
        switch (t.kind) {
            case Token::number: return tb_.constant(t.value);
            case Token::lparen: {
                NodeRef r = expr();
                expect_rparen();
                return r;
            }
            case Token::ident: {
                if (lex_.peek().kind == Token::lparen) {
                    lex_.next();
                    std::vector<NodeRef> args{expr()};
                    while (lex_.peek().kind == Token::comma) {
                        lex_.next();
                        args.push_back(expr());
                    }
                    expect_rparen();
                    return call(t, args);
                }
                auto it = vars_.find(t.text);
                if (it == vars_.end())
                    throw ParseError("unknown identifier '" + t.text + "'", t.line, t.column);
                return it->second;
            }
            default:
                throw ParseError("expected a value", t.line, t.column);
        }
    }
    NodeRef call(const Token& name, const std::vector<NodeRef>& args) {
        auto need = [&](std::size_t n) {
            if (args.size() != n)
                throw ParseError("function '" + name.text + "' takes " + std::to_string(n) +
                                     (n == 1 ? " argument" : " arguments"),
                                 name.line, name.column);
        };
        if (name.text == "abs") { need(1); return tb_.abs(args[0]); }
        if (name.text == "min") { need(2); return tb_.min(args[0], args[1]); }
        if (name.text == "max") { need(2); return tb_.max(args[0], args[1]); }
        if (name.text == "sin") { need(1); return tb_.sin(args[0]); }
        if (name.text == "cos") { need(1); return tb_.cos(args[0]); }
        if (name.text == "tan") { need(1); return tb_.tan(args[0]); }
        if (name.text == "exp") { need(1); return tb_.exp(args[0]); }
        if (name.text == "log") { need(1); return tb_.log(args[0]); }
        if (name.text == "sqrt") { need(1); return tb_.sqrt(args[0]); }
        throw ParseError("unknown function '" + name.text + "'", name.line, name.column);
    }
    void expect_rparen() {
        Token t = lex_.next();
        if (t.kind != Token::rparen) throw ParseError("expected ')'", t.line, t.column);
    }

    Lexer lex_;
    TapeBuilder& tb_;
    const std::map<std::string, NodeRef>& vars_;
};

inline std::string strip(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

}  // namespace detail

/// Split a program source into derivative expressions and the optional
/// initial-condition line. Does not record anything yet.
inline ExpressionProgram split_program(const std::string& source) {
    ExpressionProgram prog;
    std::istringstream in(source);
    std::string raw;
    int line_no = 0;
    std::vector<std::pair<std::string, int>> parts;  // (expression, source line)
    while (std::getline(in, raw)) {
        ++line_no;
        if (auto hash = raw.find('#'); hash != std::string::npos) raw.erase(hash);
        std::string text = detail::strip(raw);
        if (text.empty()) continue;
        if (text.rfind("x0:", 0) == 0) {
            std::string rest = text.substr(3);
            for (char& c : rest)
                if (c == ',') c = ' ';
            std::istringstream vs(rest);
            double v;
            while (vs >> v) prog.x0.push_back(v);
            continue;
        }
        std::size_t start = 0;
        while (true) {
            std::size_t semi = text.find(';', start);
            std::string piece = detail::strip(
                semi == std::string::npos ? text.substr(start) : text.substr(start, semi - start));
            if (!piece.empty()) parts.emplace_back(piece, line_no);
            if (semi == std::string::npos) break;
            start = semi + 1;
        }
    }
    if (parts.empty()) throw ParseError("program contains no expressions", 1, 1);
    for (std::size_t i = 0; i < parts.size(); ++i) {
        prog.expressions.push_back(parts[i].first);
        prog.variables.push_back("x" + std::to_string(i + 1));
    }
    if (prog.x0.empty()) prog.x0.assign(prog.expressions.size(), 0.0);
    if (prog.x0.size() != prog.expressions.size())
        throw ParseError("x0 line has " + std::to_string(prog.x0.size()) + " values for " +
                             std::to_string(prog.expressions.size()) + " states",
                         1, 1);
    return prog;
}

/// Record a program as a tape: one input per state, one output per
/// derivative expression, deterministic left-to-right depth-first node
/// order.
inline Tape record_program(const ExpressionProgram& prog) {
    TapeBuilder tb;
    std::map<std::string, NodeRef> vars;
    for (std::size_t i = 0; i < prog.variables.size(); ++i)
        vars[prog.variables[i]] = tb.input();
    if (prog.variables.size() == 1) vars["x"] = vars.at(prog.variables[0]);

    for (std::size_t i = 0; i < prog.expressions.size(); ++i) {
        detail::ExprParser parser(prog.expressions[i], static_cast<int>(i + 1), tb, vars);
        tb.output(parser.parse());
    }
    return tb.build();
}

inline Tape parse_expression(const std::string& source) {
    return record_program(split_program(source));
}

/// Render a tape back to program text (one expression per output). The
/// result re-parses to a tape with identical outputs; shared subgraphs are
/// duplicated textually.
inline std::string to_expression(const Tape& tape) {
    std::vector<std::string> text(tape.n_nodes());
    const auto& nodes = tape.nodes();
    char buf[40];
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        const Node& nd = nodes[i];
        switch (nd.op) {
            case Op::input:
                text[i] = "x" + std::to_string(nd.a + 1);
                break;
            case Op::constant:
                std::snprintf(buf, sizeof buf, "%.17g", nd.value);
                text[i] = nd.value < 0.0 ? "(" + std::string(buf) + ")" : buf;
                break;
            case Op::add: text[i] = "(" + text[nd.a] + " + " + text[nd.b] + ")"; break;
            case Op::sub: text[i] = "(" + text[nd.a] + " - " + text[nd.b] + ")"; break;
            case Op::mul: text[i] = "(" + text[nd.a] + " * " + text[nd.b] + ")"; break;
            case Op::neg: text[i] = "(-" + text[nd.a] + ")"; break;
            case Op::recip: text[i] = "(1 / " + text[nd.a] + ")"; break;
            default:
                text[i] = std::string(op_name(nd.op)) + "(" + text[nd.a] + ")";
                break;
        }
    }
    std::string out;
    for (std::size_t k = 0; k < tape.outputs().size(); ++k) {
        if (k) out += "; ";
        out += text[static_cast<std::size_t>(tape.outputs()[k])];
    }
    return out;
}

}  // namespace plode

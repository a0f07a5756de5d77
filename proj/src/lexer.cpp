#include "smrmc/lexer.hpp"

#include <cctype>

namespace smrmc {

namespace {
const char* const kPuncts[] = {"-->", "::", "--", "->", "==", "!=", "<=", ">=", "&&", "||",
                               "{",   "}",  "(",  ")",  "[",  "]",  ";",  ",",  ":",  "=",
                               "!",   "*",  "&",  "<",  ">",  "@",  ".",  "+",  "-",  "%"};
}

Lexer::Lexer(const std::string& src) {
    int line = 1;
    size_t i = 0, n = src.size(), line_start = 0;
    while (i < n) {
        char c = src[i];
        if (c == '\n') {
            ++line;
            line_start = ++i;
            continue;
        }
        if (std::isspace(static_cast<unsigned char>(c))) { ++i; continue; }
        if (c == '/' && i + 1 < n && src[i + 1] == '/') {
            while (i < n && src[i] != '\n') ++i;
            continue;
        }
        if (c == '/' && i + 1 < n && src[i + 1] == '*') {
            i += 2;
            while (i + 1 < n && !(src[i] == '*' && src[i + 1] == '/')) {
                if (src[i] == '\n') {
                    ++line;
                    line_start = i + 1;
                }
                ++i;
            }
            i += 2;
            continue;
        }
        Token t;
        t.line = line;
        t.column = static_cast<int>(i - line_start) + 1;
        if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
            size_t j = i;
            while (j < n && (std::isalnum(static_cast<unsigned char>(src[j])) || src[j] == '_' || src[j] == '$'))
                ++j;
            t.kind = Token::Kind::Ident;
            t.text = src.substr(i, j - i);
            i = j;
        } else if (std::isdigit(static_cast<unsigned char>(c))) {
            size_t j = i;
            while (j < n && std::isdigit(static_cast<unsigned char>(src[j]))) ++j;
            t.kind = Token::Kind::Number;
            t.text = src.substr(i, j - i);
            i = j;
        } else {
            bool found = false;
            for (const char* p : kPuncts) {
                std::string s(p);
                if (src.compare(i, s.size(), s) == 0) {
                    t.kind = Token::Kind::Punct;
                    t.text = s;
                    i += s.size();
                    found = true;
                    break;
                }
            }
            if (!found) throw ParseError(line, t.column, std::string("unexpected character '") + c + "'");
        }
        toks_.push_back(std::move(t));
    }
    Token end;
    end.line = line;
    toks_.push_back(end);
}

const Token& Lexer::peek(size_t k) const {
    size_t i = pos_ + k;
    return i < toks_.size() ? toks_[i] : toks_.back();
}

Token Lexer::next() {
    Token t = peek();
    if (pos_ < toks_.size() - 1) ++pos_;
    return t;
}

bool Lexer::is(const std::string& text, size_t k) const {
    const Token& t = peek(k);
    return t.kind != Token::Kind::End && t.text == text;
}

bool Lexer::accept(const std::string& text) {
    if (!is(text)) return false;
    next();
    return true;
}

Token Lexer::expect(const std::string& text) {
    if (!is(text)) fail("expected '" + text + "', found '" + peek().text + "'");
    return next();
}

std::string Lexer::ident() {
    if (peek().kind != Token::Kind::Ident) fail("expected identifier, found '" + peek().text + "'");
    return next().text;
}

long Lexer::number() {
    bool neg = accept("-");
    if (peek().kind != Token::Kind::Number) fail("expected number, found '" + peek().text + "'");
    long v = std::stol(next().text);
    return neg ? -v : v;
}

void Lexer::fail(const std::string& msg) const { throw ParseError(peek().line, peek().column, msg); }

}  // namespace smrmc

#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace smrmc {

struct ParseError : std::runtime_error {
    int line, column;
    ParseError(int line, int column, const std::string& msg)
        : std::runtime_error("line " + std::to_string(line) + ":" + std::to_string(column) + ": " + msg),
          line(line),
          column(column) {}
};

struct Token {
    enum class Kind { Ident, Number, Punct, End } kind = Kind::End;
    std::string text;
    int line = 0;
    int column = 0;
};

// Tokenizer shared by the .obs and .prog readers.  Supports // and /* */
// comments; punctuation is matched longest-first.
class Lexer {
public:
    explicit Lexer(const std::string& src);

    const Token& peek(size_t k = 0) const;
    Token next();
    bool at_end() const { return peek().kind == Token::Kind::End; }

    bool is(const std::string& text, size_t k = 0) const;
    bool accept(const std::string& text);
    Token expect(const std::string& text);
    std::string ident();
    long number();

    [[noreturn]] void fail(const std::string& msg) const;

private:
    std::vector<Token> toks_;
    size_t pos_ = 0;
};

}  // namespace smrmc

// Parser, lint and two-state simulator for the Verilog subset written by
// emit_verilog().
#include <algorithm>
#include <cctype>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>

#include <boost/multiprecision/cpp_int.hpp>

#include "mlrtl/emit.hpp"
#include "mlrtl/error.hpp"

namespace mlrtl {

using Bits = boost::multiprecision::uint512_t;

namespace {

Bits mask_of(int width) { return (Bits(1) << width) - 1; }

enum class Tok { Ident, Number, Literal, Sym, End };

struct Token {
  Tok kind = Tok::End;
  std::string text;
  int line = 0;
  Bits value = 0;  // Number, Literal
  int width = 0;   // Literal
  bool is_signed = false;
};

struct SyntaxFail {
  int line;
  std::string message;
};

std::vector<Token> tokenize(std::string_view src) {
  std::vector<Token> out;
  int line = 1;
  std::size_t i = 0;
  auto fail = [&](const std::string& m) { throw SyntaxFail{line, m}; };
  while (i < src.size()) {
    char c = src[i];
    if (c == '\n') {
      ++line;
      ++i;
      continue;
    }
    if (std::isspace(static_cast<unsigned char>(c))) {
      ++i;
      continue;
    }
    if (c == '/' && i + 1 < src.size() && src[i + 1] == '/') {
      while (i < src.size() && src[i] != '\n') ++i;
      continue;
    }
    Token t;
    t.line = line;
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_' || c == '$') {
      std::size_t j = i + 1;
      while (j < src.size() && (std::isalnum(static_cast<unsigned char>(src[j])) || src[j] == '_' || src[j] == '$')) ++j;
      t.kind = Tok::Ident;
      t.text = std::string(src.substr(i, j - i));
      i = j;
    } else if (std::isdigit(static_cast<unsigned char>(c))) {
      std::size_t j = i;
      Bits v = 0;
      while (j < src.size() && std::isdigit(static_cast<unsigned char>(src[j]))) v = v * 10 + (src[j++] - '0');
      if (j < src.size() && src[j] == '\'') {
        ++j;
        t.kind = Tok::Literal;
        t.width = static_cast<int>(v);
        if (t.width < 1 || t.width > 256) fail("literal width out of range");
        if (j < src.size() && src[j] == 's') {
          t.is_signed = true;
          ++j;
        }
        if (j >= src.size() || src[j] != 'h') fail("only hexadecimal sized literals are supported");
        ++j;
        std::size_t start = j;
        Bits lv = 0;
        while (j < src.size() && std::isxdigit(static_cast<unsigned char>(src[j]))) {
          char d = static_cast<char>(std::tolower(static_cast<unsigned char>(src[j++])));
          lv = lv * 16 + (d <= '9' ? d - '0' : d - 'a' + 10);
        }
        if (j == start) fail("empty literal");
        if (lv > mask_of(t.width)) fail("literal does not fit its width");
        t.value = lv;
      } else {
        t.kind = Tok::Number;
        t.value = v;
      }
      t.text = std::string(src.substr(i, j - i));
      i = j;
    } else {
      static const char* two[] = {"<=", "==", "==="};
      t.kind = Tok::Sym;
      t.text = std::string(1, c);
      for (const char* s : two) {
        std::size_t n = std::char_traits<char>::length(s);
        if (src.substr(i, n) == s && n > t.text.size()) t.text = s;
      }
      if (std::string_view("()[]{},;:?=<>+*&|~@#.").find(c) == std::string_view::npos) fail(std::string("unexpected character '") + c + "'");
      i += t.text.size();
    }
    out.push_back(std::move(t));
  }
  Token end;
  end.line = line;
  out.push_back(end);
  return out;
}

enum class Op { Ref, Lit, Select, Concat, Repl, Not, RedAnd, RedOr, Add, Mul, Lt, Gt, Eq, And, Or, Ternary, Signed };

struct Expr {
  Op op = Op::Lit;
  int sig = -1;  // Ref, Select
  int hi = 0, lo = 0;
  Bits value = 0;
  int count = 0;  // Repl
  int width = 0;  // 0 when unknown
  bool is_signed = false;
  std::vector<std::unique_ptr<Expr>> args;
};

using ExprPtr = std::unique_ptr<Expr>;

enum class SigKind { Input, Output, Wire, Reg };

struct Signal {
  std::string name;
  SigKind kind = SigKind::Wire;
  int width = 1;
  bool is_signed = false;
  int line = 0;
};

struct Comb {
  int target;
  ExprPtr expr;  // assign
  // case block
  ExprPtr selector;
  std::vector<std::pair<Bits, ExprPtr>> items;
  ExprPtr fallback;
  bool is_case = false;
  int line = 0;
};

struct Seq {
  int target;
  ExprPtr reset;
  ExprPtr enable;  // may be null
  ExprPtr d;
  int line = 0;
};

}  // namespace

struct VerilogModule {
  std::string name;
  std::vector<Signal> signals;
  std::map<std::string, int, std::less<>> index;
  std::map<std::string, long long, std::less<>> params;
  std::vector<Comb> combs;
  std::vector<Seq> seqs;
  std::vector<LintFinding> findings;

  int clk = -1, rst = -1;
  std::vector<int> order;  // comb evaluation order
  std::vector<Bits> values;

  void find(LintKind k, int line, std::string msg) { findings.push_back({k, line, std::move(msg)}); }
};

namespace {

class Parser {
 public:
  Parser(std::vector<Token> toks, VerilogModule& m) : t_(std::move(toks)), m_(m) {}

  void module() {
    expect("module");
    m_.name = ident();
    expect("(");
    port();
    while (accept(",")) port();
    expect(")");
    expect(";");
    while (!peek("endmodule")) item();
    expect("endmodule");
    if (cur().kind != Tok::End) fail("text after endmodule");
  }

 private:
  std::vector<Token> t_;
  std::size_t p_ = 0;
  VerilogModule& m_;

  const Token& cur() const { return t_[p_]; }
  [[noreturn]] void fail(const std::string& msg) const { throw SyntaxFail{cur().line, msg}; }
  bool peek(std::string_view s) const {
    return (cur().kind == Tok::Sym || cur().kind == Tok::Ident) && cur().text == s;
  }
  bool accept(std::string_view s) {
    if (!peek(s)) return false;
    ++p_;
    return true;
  }
  void expect(std::string_view s) {
    if (!accept(s)) fail("expected '" + std::string(s) + "', found '" + cur().text + "'");
  }
  std::string ident() {
    if (cur().kind != Tok::Ident) fail("expected an identifier, found '" + cur().text + "'");
    return t_[p_++].text;
  }
  long long number() {
    if (cur().kind != Tok::Number) fail("expected a number, found '" + cur().text + "'");
    return static_cast<long long>(t_[p_++].value);
  }

  int width_range() {
    if (!accept("[")) return 1;
    long long hi = number();
    expect(":");
    long long lo = number();
    expect("]");
    if (lo != 0 || hi < 0 || hi > 255) fail("ranges must be [n:0]");
    return static_cast<int>(hi + 1);
  }

  int declare(SigKind kind) {
    int line = cur().line;
    bool s = accept("signed");
    int w = width_range();
    std::string name = ident();
    if (m_.index.count(name)) {
      m_.find(LintKind::MultipleDrivers, line, "signal " + name + " declared twice");
      return m_.index[name];
    }
    m_.signals.push_back({name, kind, w, s, line});
    int id = static_cast<int>(m_.signals.size()) - 1;
    m_.index[name] = id;
    return id;
  }

  void port() {
    if (accept("input")) {
      expect("wire");
      declare(SigKind::Input);
    } else if (accept("output")) {
      expect("wire");
      declare(SigKind::Output);
    } else {
      fail("expected a port declaration");
    }
  }

  int lookup(const std::string& name, int line) {
    auto it = m_.index.find(name);
    if (it == m_.index.end()) {
      m_.find(LintKind::UndeclaredIdentifier, line, "undeclared identifier " + name);
      m_.signals.push_back({name, SigKind::Wire, 0, false, line});
      int id = static_cast<int>(m_.signals.size()) - 1;
      m_.index[name] = id;
      return id;
    }
    return it->second;
  }

  void item() {
    int line = cur().line;
    if (accept("localparam")) {
      std::string name = ident();
      expect("=");
      m_.params[name] = number();
      expect(";");
    } else if (accept("wire")) {
      declare(SigKind::Wire);
      expect(";");
    } else if (accept("reg")) {
      declare(SigKind::Reg);
      expect(";");
    } else if (accept("assign")) {
      Comb c;
      c.line = line;
      c.target = lookup(ident(), line);
      expect("=");
      c.expr = expr();
      expect(";");
      check_assign(c.target, *c.expr, line);
      m_.combs.push_back(std::move(c));
    } else if (accept("always")) {
      expect("@");
      expect("(");
      if (accept("*")) {
        expect(")");
        case_block(line);
      } else {
        expect("posedge");
        if (ident() != "clk") fail("registers must be clocked by clk");
        expect(")");
        seq_block(line);
      }
    } else {
      fail("unexpected '" + cur().text + "'");
    }
  }

  void case_block(int line) {
    Comb c;
    c.is_case = true;
    c.line = line;
    expect("case");
    expect("(");
    c.selector = expr();
    expect(")");
    c.target = -1;
    auto target = [&](int l) {
      int t = lookup(ident(), l);
      if (c.target >= 0 && t != c.target) fail("a case block must assign a single signal");
      c.target = t;
      return t;
    };
    while (!peek("default")) {
      int l = cur().line;
      if (cur().kind != Tok::Literal) fail("case items must be sized literals");
      Token item = t_[p_++];
      if (c.selector->width && item.width != c.selector->width)
        m_.find(LintKind::WidthMismatch, l, "case item width differs from selector");
      expect(":");
      int tg = target(l);
      expect("=");
      ExprPtr e = expr();
      expect(";");
      check_assign(tg, *e, l);
      c.items.emplace_back(item.value, std::move(e));
    }
    expect("default");
    expect(":");
    int tg = target(cur().line);
    expect("=");
    c.fallback = expr();
    check_assign(tg, *c.fallback, cur().line);
    expect(";");
    expect("endcase");
    m_.combs.push_back(std::move(c));
  }

  void seq_block(int line) {
    Seq s;
    s.line = line;
    expect("if");
    expect("(");
    if (ident() != "rst") fail("registers must reset on rst");
    expect(")");
    s.target = lookup(ident(), line);
    expect("<=");
    s.reset = expr();
    expect(";");
    check_assign(s.target, *s.reset, line);
    expect("else");
    if (accept("if")) {
      expect("(");
      s.enable = expr();
      expect(")");
      if (s.enable->width && s.enable->width != 1) m_.find(LintKind::WidthMismatch, line, "enable must be one bit");
    }
    int t = lookup(ident(), line);
    if (t != s.target) fail("an always block must assign a single register");
    expect("<=");
    s.d = expr();
    expect(";");
    check_assign(s.target, *s.d, line);
    m_.seqs.push_back(std::move(s));
  }

  void check_assign(int target, const Expr& e, int line) {
    const Signal& s = m_.signals[static_cast<std::size_t>(target)];
    if (s.width && e.width && s.width != e.width)
      m_.find(LintKind::WidthMismatch, line,
              "assignment to " + s.name + " (" + std::to_string(s.width) + " bits) from a " +
                  std::to_string(e.width) + "-bit expression");
  }

  ExprPtr make(Op op, std::vector<ExprPtr> args) {
    auto e = std::make_unique<Expr>();
    e->op = op;
    e->args = std::move(args);
    return e;
  }

  void binary_widths(Expr& e, const char* what, int line) {
    int a = e.args[0]->width, b = e.args[1]->width;
    if (a && b && a != b)
      m_.find(LintKind::WidthMismatch, line,
              std::string("operands of ") + what + " are " + std::to_string(a) + " and " + std::to_string(b) + " bits");
  }

  ExprPtr expr() {
    int line = cur().line;
    ExprPtr c = or_expr();
    if (!accept("?")) return c;
    ExprPtr a = expr();
    expect(":");
    ExprPtr b = expr();
    if (c->width && c->width != 1) m_.find(LintKind::WidthMismatch, line, "condition must be one bit");
    std::vector<ExprPtr> args;
    args.push_back(std::move(c));
    args.push_back(std::move(a));
    args.push_back(std::move(b));
    ExprPtr e = make(Op::Ternary, std::move(args));
    int wa = e->args[1]->width, wb = e->args[2]->width;
    if (wa && wb && wa != wb)
      m_.find(LintKind::WidthMismatch, line, "branches are " + std::to_string(wa) + " and " + std::to_string(wb) + " bits");
    e->width = std::max(wa, wb);
    e->is_signed = e->args[1]->is_signed && e->args[2]->is_signed;
    return e;
  }

  template <typename Next>
  ExprPtr left_assoc(Next next, std::initializer_list<std::pair<const char*, Op>> ops) {
    ExprPtr lhs = (this->*next)();
    for (;;) {
      int line = cur().line;
      const std::pair<const char*, Op>* hit = nullptr;
      for (const auto& o : ops)
        if (peek(o.first)) hit = &o;
      if (!hit) return lhs;
      ++p_;
      ExprPtr rhs = (this->*next)();
      std::vector<ExprPtr> args;
      args.push_back(std::move(lhs));
      args.push_back(std::move(rhs));
      ExprPtr e = make(hit->second, std::move(args));
      binary_widths(*e, hit->first, line);
      bool both_signed = e->args[0]->is_signed && e->args[1]->is_signed;
      if (hit->second == Op::Lt || hit->second == Op::Gt || hit->second == Op::Eq) {
        if ((hit->second != Op::Eq) && e->args[0]->is_signed != e->args[1]->is_signed)
          m_.find(LintKind::SignednessMismatch, line, std::string("mixed signedness in ") + hit->first);
        e->width = 1;
        e->is_signed = false;
      } else {
        e->width = std::max(e->args[0]->width, e->args[1]->width);
        e->is_signed = both_signed;
      }
      lhs = std::move(e);
    }
  }

  ExprPtr or_expr() { return left_assoc(&Parser::and_expr, {{"|", Op::Or}}); }
  ExprPtr and_expr() { return left_assoc(&Parser::eq_expr, {{"&", Op::And}}); }
  ExprPtr eq_expr() { return left_assoc(&Parser::rel_expr, {{"==", Op::Eq}}); }
  ExprPtr rel_expr() { return left_assoc(&Parser::add_expr, {{"<", Op::Lt}, {">", Op::Gt}}); }
  ExprPtr add_expr() { return left_assoc(&Parser::mul_expr, {{"+", Op::Add}}); }
  ExprPtr mul_expr() { return left_assoc(&Parser::unary, {{"*", Op::Mul}}); }

  ExprPtr unary() {
    Op op;
    if (accept("~")) op = Op::Not;
    else if (accept("&")) op = Op::RedAnd;
    else if (accept("|")) op = Op::RedOr;
    else return primary();
    std::vector<ExprPtr> args;
    args.push_back(unary());
    ExprPtr e = make(op, std::move(args));
    e->width = op == Op::Not ? e->args[0]->width : 1;
    e->is_signed = op == Op::Not && e->args[0]->is_signed;
    return e;
  }

  ExprPtr primary() {
    int line = cur().line;
    if (cur().kind == Tok::Literal) {
      auto e = std::make_unique<Expr>();
      e->op = Op::Lit;
      e->value = cur().value;
      e->width = cur().width;
      e->is_signed = cur().is_signed;
      ++p_;
      return e;
    }
    if (accept("(")) {
      ExprPtr e = expr();
      expect(")");
      return e;
    }
    if (accept("{")) {
      if (cur().kind == Tok::Number) {
        long long n = number();
        expect("{");
        std::vector<ExprPtr> args;
        args.push_back(expr());
        expect("}");
        expect("}");
        ExprPtr e = make(Op::Repl, std::move(args));
        e->count = static_cast<int>(n);
        e->width = e->args[0]->width * e->count;
        return e;
      }
      std::vector<ExprPtr> args;
      args.push_back(expr());
      while (accept(",")) args.push_back(expr());
      expect("}");
      ExprPtr e = make(Op::Concat, std::move(args));
      bool known = true;
      for (auto& a : e->args) {
        known = known && a->width;
        e->width += a->width;
      }
      if (!known) e->width = 0;
      return e;
    }
    std::string name = ident();
    if (name == "$signed") {
      expect("(");
      std::vector<ExprPtr> args;
      args.push_back(expr());
      expect(")");
      ExprPtr e = make(Op::Signed, std::move(args));
      e->width = e->args[0]->width;
      e->is_signed = true;
      return e;
    }
    int sig = lookup(name, line);
    const Signal& s = m_.signals[static_cast<std::size_t>(sig)];
    auto e = std::make_unique<Expr>();
    e->sig = sig;
    if (accept("[")) {
      long long hi = number();
      long long lo = hi;
      if (accept(":")) lo = number();
      expect("]");
      if (lo > hi || (s.width && hi >= s.width))
        m_.find(LintKind::WidthMismatch, line, "select [" + std::to_string(hi) + ":" + std::to_string(lo) + "] outside " + name);
      e->op = Op::Select;
      e->hi = static_cast<int>(hi);
      e->lo = static_cast<int>(lo);
      e->width = static_cast<int>(hi - lo + 1);
      return e;
    }
    e->op = Op::Ref;
    e->width = s.width;
    e->is_signed = s.is_signed;
    return e;
  }
};

void collect_refs(const Expr& e, std::vector<int>& out) {
  if (e.sig >= 0) out.push_back(e.sig);
  for (const auto& a : e.args) collect_refs(*a, out);
}

std::vector<int> refs_of(const Comb& c) {
  std::vector<int> r;
  if (c.is_case) {
    collect_refs(*c.selector, r);
    for (const auto& [v, e] : c.items) collect_refs(*e, r);
    collect_refs(*c.fallback, r);
  } else {
    collect_refs(*c.expr, r);
  }
  return r;
}

void analyse(VerilogModule& m) {
  const std::size_t ns = m.signals.size();
  std::vector<int> driver_count(ns, 0);
  std::vector<int> comb_of(ns, -1);
  for (std::size_t i = 0; i < m.combs.size(); ++i) {
    int t = m.combs[i].target;
    ++driver_count[static_cast<std::size_t>(t)];
    comb_of[static_cast<std::size_t>(t)] = static_cast<int>(i);
    const Signal& s = m.signals[static_cast<std::size_t>(t)];
    if (s.kind == SigKind::Reg && !m.combs[i].is_case)
      m.find(LintKind::MultipleDrivers, m.combs[i].line, "continuous assignment to reg " + s.name);
  }
  for (const Seq& s : m.seqs) {
    ++driver_count[static_cast<std::size_t>(s.target)];
    if (m.signals[static_cast<std::size_t>(s.target)].kind != SigKind::Reg)
      m.find(LintKind::MultipleDrivers, s.line, "register " + m.signals[static_cast<std::size_t>(s.target)].name + " is not declared reg");
  }
  for (std::size_t i = 0; i < ns; ++i) {
    const Signal& s = m.signals[i];
    if (s.width == 0) continue;
    if (s.kind == SigKind::Input) {
      if (driver_count[i]) m.find(LintKind::MultipleDrivers, s.line, "input " + s.name + " is driven inside the module");
    } else if (driver_count[i] == 0) {
      m.find(LintKind::UndrivenSignal, s.line, "signal " + s.name + " is never driven");
    } else if (driver_count[i] > 1) {
      m.find(LintKind::MultipleDrivers, s.line, "signal " + s.name + " has " + std::to_string(driver_count[i]) + " drivers");
    }
  }
  if (auto it = m.index.find("clk"); it != m.index.end()) m.clk = it->second;
  if (auto it = m.index.find("rst"); it != m.index.end()) m.rst = it->second;
  if (m.clk < 0 || m.rst < 0) m.find(LintKind::UndeclaredIdentifier, 1, "module needs clk and rst ports");

  // Combinational order.
  std::vector<int> state(m.combs.size(), 0);
  bool loop = false;
  std::function<void(int)> visit = [&](int ci) {
    if (state[static_cast<std::size_t>(ci)] == 2) return;
    if (state[static_cast<std::size_t>(ci)] == 1) {
      loop = true;
      return;
    }
    state[static_cast<std::size_t>(ci)] = 1;
    for (int r : refs_of(m.combs[static_cast<std::size_t>(ci)])) {
      int d = comb_of[static_cast<std::size_t>(r)];
      if (d >= 0) visit(d);
    }
    state[static_cast<std::size_t>(ci)] = 2;
    m.order.push_back(ci);
  };
  for (std::size_t i = 0; i < m.combs.size(); ++i) visit(static_cast<int>(i));
  if (loop) m.find(LintKind::SyntaxError, 1, "combinational loop");

  auto ii = m.params.find("II");
  auto lat = m.params.find("LATENCY");
  if (ii == m.params.end() || lat == m.params.end() || ii->second != 1 || loop) return;

  // Register count along every input-to-output path.
  std::vector<int> seq_of(ns, -1);
  for (std::size_t i = 0; i < m.seqs.size(); ++i) seq_of[static_cast<std::size_t>(m.seqs[i].target)] = static_cast<int>(i);
  std::vector<int> dep(ns, -1);  // -1 unknown, 0 no, 1 yes
  std::vector<int> depth(ns, -1);
  std::vector<std::uint8_t> busy(ns, 0);
  std::function<bool(int)> depends = [&](int s) -> bool {
    auto si = static_cast<std::size_t>(s);
    if (dep[si] >= 0) return dep[si] == 1;
    if (busy[si]) return false;
    busy[si] = 1;
    bool r = false;
    const Signal& sg = m.signals[si];
    if (sg.kind == SigKind::Input) {
      r = s != m.clk && s != m.rst;
    } else if (comb_of[si] >= 0) {
      for (int x : refs_of(m.combs[static_cast<std::size_t>(comb_of[si])])) r = depends(x) || r;
    } else if (seq_of[si] >= 0) {
      std::vector<int> refs;
      const Seq& q = m.seqs[static_cast<std::size_t>(seq_of[si])];
      collect_refs(*q.d, refs);
      if (q.enable) collect_refs(*q.enable, refs);
      for (int x : refs) r = depends(x) || r;
    }
    busy[si] = 0;
    dep[si] = r ? 1 : 0;
    return r;
  };
  std::function<int(int)> reg_depth = [&](int s) -> int {
    auto si = static_cast<std::size_t>(s);
    if (depth[si] >= 0) return depth[si];
    if (busy[si]) {
      m.find(LintKind::PathRegisterCount, m.signals[si].line, "input-dependent loop through " + m.signals[si].name);
      return 0;
    }
    busy[si] = 1;
    int r = 0;
    if (comb_of[si] >= 0) {
      int seen = -1;
      for (int x : refs_of(m.combs[static_cast<std::size_t>(comb_of[si])])) {
        if (!depends(x)) continue;
        int d = reg_depth(x);
        if (seen >= 0 && d != seen)
          m.find(LintKind::PathRegisterCount, m.signals[si].line,
                 m.signals[si].name + " combines paths with " + std::to_string(seen) + " and " + std::to_string(d) + " registers");
        seen = std::max(seen, d);
      }
      r = std::max(seen, 0);
    } else if (seq_of[si] >= 0) {
      std::vector<int> refs;
      collect_refs(*m.seqs[static_cast<std::size_t>(seq_of[si])].d, refs);
      int seen = 0;
      for (int x : refs)
        if (depends(x)) seen = std::max(seen, reg_depth(x));
      r = seen + 1;
    }
    busy[si] = 0;
    return depth[si] = r;
  };
  for (std::size_t i = 0; i < ns; ++i) {
    const Signal& s = m.signals[i];
    if (s.kind != SigKind::Output || !depends(static_cast<int>(i))) continue;
    int d = reg_depth(static_cast<int>(i));
    if (d != lat->second)
      m.find(LintKind::PathRegisterCount, s.line,
             "output " + s.name + " is " + std::to_string(d) + " registers from the inputs, LATENCY is " +
                 std::to_string(lat->second));
  }
}

void parse_into(std::string_view src, VerilogModule& m) {
  try {
    Parser p(tokenize(src), m);
    p.module();
  } catch (const SyntaxFail& f) {
    m.find(LintKind::SyntaxError, f.line, f.message);
    return;
  }
  analyse(m);
}

Bits sign_extend(const Bits& v, int from, int to) {
  if (from >= to || from == 0) return v & mask_of(to);
  if (((v >> (from - 1)) & 1) != 0) return (v | (mask_of(to) ^ mask_of(from))) & mask_of(to);
  return v;
}

Bits resize(const Bits& v, int from, int to, bool is_signed) {
  if (to <= from) return v & mask_of(to);
  return is_signed ? sign_extend(v, from, to) : v;
}

bool signed_less(const Bits& a, const Bits& b, int w) {
  bool na = ((a >> (w - 1)) & 1) != 0, nb = ((b >> (w - 1)) & 1) != 0;
  if (na != nb) return na;
  return a < b;
}

Bits eval(const VerilogModule& m, const Expr& e) {
  switch (e.op) {
    case Op::Ref: return m.values[static_cast<std::size_t>(e.sig)];
    case Op::Lit: return e.value;
    case Op::Select: return (m.values[static_cast<std::size_t>(e.sig)] >> e.lo) & mask_of(e.width);
    case Op::Concat: {
      Bits v = 0;
      for (const auto& a : e.args) v = (v << a->width) | eval(m, *a);
      return v;
    }
    case Op::Repl: {
      Bits one = eval(m, *e.args[0]), v = 0;
      for (int i = 0; i < e.count; ++i) v = (v << e.args[0]->width) | one;
      return v;
    }
    case Op::Not: return eval(m, *e.args[0]) ^ mask_of(e.width);
    case Op::RedAnd: return eval(m, *e.args[0]) == mask_of(e.args[0]->width) ? 1 : 0;
    case Op::RedOr: return eval(m, *e.args[0]) != 0 ? 1 : 0;
    case Op::Signed: return eval(m, *e.args[0]);
    case Op::Ternary:
      return resize(eval(m, *e.args[0]) != 0 ? eval(m, *e.args[1]) : eval(m, *e.args[2]),
                    eval(m, *e.args[0]) != 0 ? e.args[1]->width : e.args[2]->width, e.width, e.is_signed);
    default: break;
  }
  const Expr& a = *e.args[0];
  const Expr& b = *e.args[1];
  const bool both = a.is_signed && b.is_signed;
  const int w = std::max(a.width, b.width);
  Bits x = resize(eval(m, a), a.width, w, both);
  Bits y = resize(eval(m, b), b.width, w, both);
  switch (e.op) {
    case Op::Add: return (x + y) & mask_of(w);
    case Op::Mul: return (x * y) & mask_of(w);
    case Op::And: return x & y;
    case Op::Or: return x | y;
    case Op::Eq: return x == y ? 1 : 0;
    case Op::Lt: return (both ? signed_less(x, y, w) : x < y) ? 1 : 0;
    case Op::Gt: return (both ? signed_less(y, x, w) : y < x) ? 1 : 0;
    default: break;
  }
  return 0;
}

void assign_value(VerilogModule& m, int target, const Expr& e, const Bits& v) {
  const Signal& s = m.signals[static_cast<std::size_t>(target)];
  m.values[static_cast<std::size_t>(target)] = resize(v, e.width, s.width, e.is_signed);
}

}  // namespace

std::string_view lint_kind_name(LintKind k) {
  switch (k) {
    case LintKind::SyntaxError: return "SyntaxError";
    case LintKind::UndeclaredIdentifier: return "UndeclaredIdentifier";
    case LintKind::WidthMismatch: return "WidthMismatch";
    case LintKind::SignednessMismatch: return "SignednessMismatch";
    case LintKind::MultipleDrivers: return "MultipleDrivers";
    case LintKind::UndrivenSignal: return "UndrivenSignal";
    case LintKind::PathRegisterCount: return "PathRegisterCount";
  }
  return "?";
}

std::vector<LintFinding> lint_verilog(std::string_view source) {
  VerilogModule m;
  parse_into(source, m);
  return std::move(m.findings);
}

VerilogSimulator::VerilogSimulator(std::string_view source) : m_(std::make_unique<VerilogModule>()) {
  parse_into(source, *m_);
  for (const LintFinding& f : m_->findings)
    if (f.kind != LintKind::PathRegisterCount)
      throw Error(ErrorCode::ParseError, "line " + std::to_string(f.line) + ": " + f.message);
  m_->values.assign(m_->signals.size(), 0);
  reset();
}

VerilogSimulator::~VerilogSimulator() = default;
VerilogSimulator::VerilogSimulator(VerilogSimulator&&) noexcept = default;

void VerilogSimulator::reset() {
  m_->values[static_cast<std::size_t>(m_->rst)] = 1;
  step();
  m_->values[static_cast<std::size_t>(m_->rst)] = 0;
}

void VerilogSimulator::set(std::string_view port, int128 value) {
  auto it = m_->index.find(port);
  if (it == m_->index.end() || m_->signals[static_cast<std::size_t>(it->second)].kind != SigKind::Input)
    throw Error(ErrorCode::InvalidArgument, "no input port " + std::string(port));
  const Signal& s = m_->signals[static_cast<std::size_t>(it->second)];
  __extension__ typedef unsigned __int128 uint128;
  const auto u = static_cast<uint128>(value);
  Bits v = Bits(static_cast<unsigned long long>(u >> 64)) << 64 | Bits(static_cast<unsigned long long>(u));
  m_->values[static_cast<std::size_t>(it->second)] = v & mask_of(s.width);
}

void VerilogSimulator::evaluate() {
  VerilogModule& m = *m_;
  for (int ci : m.order) {
    const Comb& c = m.combs[static_cast<std::size_t>(ci)];
    if (!c.is_case) {
      assign_value(m, c.target, *c.expr, eval(m, *c.expr));
      continue;
    }
    Bits sel = eval(m, *c.selector);
    const Expr* chosen = c.fallback.get();
    for (const auto& [v, e] : c.items)
      if (v == sel) {
        chosen = e.get();
        break;
      }
    assign_value(m, c.target, *chosen, eval(m, *chosen));
  }
}

void VerilogSimulator::step() {
  evaluate();
  VerilogModule& m = *m_;
  const bool rst = m.values[static_cast<std::size_t>(m.rst)] != 0;
  std::vector<std::pair<int, Bits>> next;
  for (const Seq& s : m.seqs) {
    const Signal& sg = m.signals[static_cast<std::size_t>(s.target)];
    if (rst) {
      next.emplace_back(s.target, resize(eval(m, *s.reset), s.reset->width, sg.width, s.reset->is_signed));
    } else if (!s.enable || eval(m, *s.enable) != 0) {
      next.emplace_back(s.target, resize(eval(m, *s.d), s.d->width, sg.width, s.d->is_signed));
    }
  }
  for (auto& [t, v] : next) m.values[static_cast<std::size_t>(t)] = v;
}

int128 VerilogSimulator::get(std::string_view signal) const {
  auto it = m_->index.find(signal);
  if (it == m_->index.end()) throw Error(ErrorCode::InvalidArgument, "no signal " + std::string(signal));
  const Signal& s = m_->signals[static_cast<std::size_t>(it->second)];
  if (s.width > 120) throw Error(ErrorCode::InvalidArgument, "signal " + s.name + " is too wide to read");
  Bits v = m_->values[static_cast<std::size_t>(it->second)];
  int128 r = static_cast<int128>(static_cast<unsigned long long>(v >> 64)) << 64 |
             static_cast<int128>(static_cast<unsigned long long>(v & mask_of(64)));
  if (s.is_signed && ((r >> (s.width - 1)) & 1)) r -= int128{1} << s.width;
  return r;
}

int VerilogSimulator::localparam(std::string_view name) const {
  auto it = m_->params.find(name);
  if (it == m_->params.end()) throw Error(ErrorCode::InvalidArgument, "no localparam " + std::string(name));
  return static_cast<int>(it->second);
}

std::vector<std::vector<FixedPointValue>> simulate_verilog_stream(
    std::string_view source, const NetlistIr& n, const std::vector<std::vector<FixedPointValue>>& xs) {
  VerilogSimulator sim(source);
  const int latency = sim.localparam("LATENCY");
  const int ii = sim.localparam("II");
  std::vector<std::vector<FixedPointValue>> ys;
  if (xs.empty()) return ys;
  const long long last = latency + static_cast<long long>(xs.size() - 1) * ii;
  for (long long cycle = 0; cycle <= last; ++cycle) {
    if (cycle % ii == 0 && static_cast<std::size_t>(cycle / ii) < xs.size()) {
      const auto& x = xs[static_cast<std::size_t>(cycle / ii)];
      for (std::size_t i = 0; i < n.n_data_inputs(); ++i) sim.set(n.inputs[i].name, x.at(i).raw);
      sim.set(n.inputs.back().name, 1);
    }
    sim.evaluate();
    long long rel = cycle - latency;
    if (rel >= 0 && rel % ii == 0) {
      std::vector<FixedPointValue> y;
      for (std::size_t i = 0; i < n.n_data_outputs(); ++i) {
        const Port& p = n.outputs[i];
        y.push_back({sim.get(p.name), n.wires[static_cast<std::size_t>(p.wire)].type.format});
      }
      ys.push_back(std::move(y));
    }
    if (cycle < last) sim.step();
  }
  return ys;
}

}  // namespace mlrtl

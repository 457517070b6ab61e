//! C99 emission: runtime prelude, kernel function and a standalone driver.

use std::fmt::Write as _;

use super::ir::*;
use super::{CodegenError, IdxType};

const INCLUDES: &str = "#include <stdio.h>\n#include <stdlib.h>\n#include <string.h>\n#include <stdint.h>\n#include <stdbool.h>\n\n";

const PRELUDE: &str = r#"typedef struct { idx_t* d; idx_t len, cap; } sl_buf;
typedef struct { idx_t* pos; idx_t npos; idx_t* crd; idx_t ncrd; } sl_level;
typedef struct { sl_level lv[SL_MAX_LEVELS]; val_t* vals; idx_t nvals; } sl_out;

#define SL_BUF(b) sl_buf b = {0}
#define SL_OUT_IDX(a) idx_t* a = NULL; idx_t a##_cap = 0
#define SL_OUT_VAL(a) val_t* a = NULL; idx_t a##_cap = 0

static inline idx_t sl_min2(idx_t a, idx_t b) { return a < b ? a : b; }
static inline idx_t sl_max2(idx_t a, idx_t b) { return a > b ? a : b; }

static void sl_push(sl_buf* b, idx_t c, idx_t p) {
  if (2 * (b->len + 1) > b->cap) {
    idx_t cap = b->cap ? b->cap : 64;
    while (cap < 2 * (b->len + 1)) cap *= 2;
    b->d = (idx_t*)realloc(b->d, (size_t)cap * sizeof(idx_t));
    b->cap = cap;
  }
  b->d[2 * b->len] = c;
  b->d[2 * b->len + 1] = p;
  b->len++;
}

static int sl_cmp(const void* a, const void* b) {
  const idx_t* x = (const idx_t*)a;
  const idx_t* y = (const idx_t*)b;
  if (x[0] != y[0]) return x[0] < y[0] ? -1 : 1;
  return (x[1] > y[1]) - (x[1] < y[1]);
}

static void sl_sort(sl_buf* b) { if (b->len > 1) qsort(b->d, (size_t)b->len, 2 * sizeof(idx_t), sl_cmp); }
static void sl_free(sl_buf* b) { free(b->d); }

static void sl_grow_idx(idx_t** a, idx_t* cap, idx_t n) {
  if (n <= *cap) return;
  idx_t c = *cap ? *cap : 16;
  while (c < n) c *= 2;
  *a = (idx_t*)realloc(*a, (size_t)c * sizeof(idx_t));
  memset(*a + *cap, 0, (size_t)(c - *cap) * sizeof(idx_t));
  *cap = c;
}

static void sl_grow_val(val_t** a, idx_t* cap, idx_t n) {
  if (n <= *cap) return;
  idx_t c = *cap ? *cap : 16;
  while (c < n) c *= 2;
  *a = (val_t*)realloc(*a, (size_t)c * sizeof(val_t));
  memset(*a + *cap, 0, (size_t)(c - *cap) * sizeof(val_t));
  *cap = c;
}

static void sl_fill_idx(idx_t** a, idx_t* cap, idx_t n, idx_t v) {
  sl_grow_idx(a, cap, n);
  for (idx_t i = 0; i < n; i++) (*a)[i] = v;
}

static void sl_out_level(sl_out* o, int k, idx_t* pos, idx_t npos, idx_t* crd, idx_t ncrd) {
  o->lv[k].pos = pos; o->lv[k].npos = npos; o->lv[k].crd = crd; o->lv[k].ncrd = ncrd;
}

static void sl_out_vals(sl_out* o, val_t* v, idx_t n) { o->vals = v; o->nvals = n; }
"#;

fn c_expr(e: &Expr) -> String {
    match e {
        Expr::Int(i) => i.to_string(),
        Expr::Real(x) => {
            let s = format!("{x:?}");
            if s.contains(['.', 'e', 'n', 'i']) {
                s
            } else {
                format!("{s}.0")
            }
        }
        Expr::Bool(b) => (if *b { "1" } else { "0" }).into(),
        Expr::Var(v) => v.clone(),
        Expr::Load(a, i) => format!("{a}[{}]", c_expr(i)),
        Expr::Bin(Op::Max, a, b) => format!("sl_max2({}, {})", c_expr(a), c_expr(b)),
        Expr::Bin(op, a, b) => format!("({} {op} {})", c_expr(a), c_expr(b)),
        Expr::Not(a) => format!("!{}", c_expr(a)),
        Expr::Min(es) => {
            let mut it = es.iter().rev();
            let mut s = c_expr(it.next().expect("min of nothing"));
            for e in it {
                s = format!("sl_min2({}, {s})", c_expr(e));
            }
            s
        }
    }
}

fn c_ty(t: Ty) -> &'static str {
    match t {
        Ty::Idx => "idx_t",
        Ty::Val => "val_t",
        Ty::Bool => "bool",
    }
}

fn emit_block(out: &mut String, body: &[Stmt], depth: usize) -> Result<(), CodegenError> {
    for s in body {
        emit_stmt(out, s, depth)?;
    }
    Ok(())
}

fn emit_stmt(out: &mut String, s: &Stmt, depth: usize) -> Result<(), CodegenError> {
    let pad = "  ".repeat(depth);
    match s {
        Stmt::Decl(t, n, Some(e)) => writeln!(out, "{pad}{} {n} = {};", c_ty(*t), c_expr(e)),
        Stmt::Decl(t, n, None) => writeln!(out, "{pad}{} {n};", c_ty(*t)),
        Stmt::Assign(n, e) => writeln!(out, "{pad}{n} = {};", c_expr(e)),
        Stmt::Store(a, i, e) => writeln!(out, "{pad}{a}[{}] = {};", c_expr(i), c_expr(e)),
        Stmt::Accumulate(t, e) => writeln!(out, "{pad}{} += {};", c_expr(t), c_expr(e)),
        Stmt::ForRange { var, lo, hi, body } => {
            writeln!(
                out,
                "{pad}for (idx_t {var} = {}; {var} < {}; {var}++) {{",
                c_expr(lo),
                c_expr(hi)
            )
            .ok();
            emit_block(out, body, depth + 1)?;
            writeln!(out, "{pad}}}")
        }
        Stmt::While { cond, body } => {
            writeln!(out, "{pad}while ({}) {{", c_expr(cond)).ok();
            emit_block(out, body, depth + 1)?;
            writeln!(out, "{pad}}}")
        }
        Stmt::If { cases, other } => {
            for (k, (c, b)) in cases.iter().enumerate() {
                let kw = if k == 0 {
                    format!("{pad}if")
                } else {
                    " else if".to_string()
                };
                writeln!(out, "{kw} ({}) {{", c_expr(c)).ok();
                emit_block(out, b, depth + 1)?;
                write!(out, "{pad}}}").ok();
            }
            if !other.is_empty() {
                writeln!(out, " else {{").ok();
                emit_block(out, other, depth + 1)?;
                write!(out, "{pad}}}").ok();
            }
            writeln!(out)
        }
        Stmt::Level(c) => {
            return Err(CodegenError::Unsupported(format!(
                "level call {}{}.{} left after inlining",
                c.tensor,
                c.level,
                c.func.name()
            )))
        }
        Stmt::Call(n, args) => {
            let a: Vec<String> = args.iter().map(c_expr).collect();
            writeln!(out, "{pad}{n}({});", a.join(", "))
        }
        Stmt::Block(b) => {
            writeln!(out, "{pad}{{").ok();
            emit_block(out, b, depth + 1)?;
            writeln!(out, "{pad}}}")
        }
        Stmt::Break => writeln!(out, "{pad}break;"),
        Stmt::Comment(c) => writeln!(out, "{pad}/* {c} */"),
    }
    .ok();
    Ok(())
}

fn c_param(p: &Param) -> String {
    match p {
        Param::IdxArray(n) => format!("const idx_t* restrict {n}"),
        Param::ValArray(n) => format!("const val_t* restrict {n}"),
        Param::Idx(n) => format!("idx_t {n}"),
    }
}

/// Prelude plus the kernel function. The kernel has no level calls left.
pub fn emit_kernel(
    k: &Kernel,
    idx: IdxType,
    val: &str,
    levels: usize,
) -> Result<String, CodegenError> {
    let mut s = String::from(INCLUDES);
    let _ = writeln!(s, "typedef {} idx_t;\ntypedef {val} val_t;", idx.c_type());
    let _ = writeln!(s, "#define SL_MAX_LEVELS {}", levels.max(1));
    s.push_str(PRELUDE);
    let mut ps: Vec<String> = k.params.iter().map(c_param).collect();
    ps.push("sl_out* out".into());
    let _ = writeln!(s, "\nvoid {}({}) {{", k.name, ps.join(", "));
    emit_block(&mut s, &k.body, 1)?;
    s.push_str("}\n");
    Ok(s)
}

/// A `main` that reads the parameters from the file named by `argv[1]`
/// (length-prefixed arrays, whitespace separated, in parameter order), runs
/// the kernel and prints the output arrays.
pub fn emit_driver(k: &Kernel, levels: usize, val_scanf: &str, val_printf: &str) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"
static idx_t sl_rd_one(FILE* f) {{ long long v = 0; if (fscanf(f, "%lld", &v) != 1) exit(3); return (idx_t)v; }}
static idx_t* sl_rd_idx(FILE* f) {{
  idx_t n = sl_rd_one(f);
  idx_t* a = (idx_t*)malloc((size_t)(n + 1) * sizeof(idx_t));
  for (idx_t i = 0; i < n; i++) a[i] = sl_rd_one(f);
  return a;
}}
static val_t* sl_rd_val(FILE* f) {{
  idx_t n = sl_rd_one(f);
  val_t* a = (val_t*)malloc((size_t)(n + 1) * sizeof(val_t));
  for (idx_t i = 0; i < n; i++) if (fscanf(f, "{val_scanf}", &a[i]) != 1) exit(3);
  return a;
}}
static void sl_pr_idx(const char* tag, const idx_t* a, idx_t n) {{
  printf("%s %lld", tag, (long long)n);
  for (idx_t i = 0; i < n; i++) printf(" %lld", (long long)a[i]);
  printf("\n");
}}

int main(int argc, char** argv) {{
  if (argc < 2) return 2;
  FILE* f = fopen(argv[1], "r");
  if (!f) return 2;"#
    );
    let mut args = Vec::new();
    for p in &k.params {
        let _ = match p {
            Param::IdxArray(n) => writeln!(s, "  idx_t* {n} = sl_rd_idx(f);"),
            Param::ValArray(n) => writeln!(s, "  val_t* {n} = sl_rd_val(f);"),
            Param::Idx(n) => writeln!(s, "  idx_t {n} = sl_rd_one(f);"),
        };
        args.push(p.name().to_string());
    }
    args.push("&out".into());
    let _ = writeln!(
        s,
        r#"  fclose(f);
  sl_out out;
  memset(&out, 0, sizeof out);
  {}({});
  for (int k = 0; k < {levels}; k++) {{
    sl_pr_idx("pos", out.lv[k].pos, out.lv[k].npos);
    sl_pr_idx("crd", out.lv[k].crd, out.lv[k].ncrd);
  }}
  printf("vals %lld", (long long)out.nvals);
  for (idx_t i = 0; i < out.nvals; i++) printf(" {val_printf}", out.vals[i]);
  printf("\n");
  return 0;
}}"#,
        k.name,
        args.join(", ")
    );
    s
}

//! JSON with 17 significant digits and CSV flattening.

use serde_json::Value;
use std::fmt::Write as _;

/// Like C's %.17g: 17 significant digits, trailing zeros removed.
pub fn fmt_g17(x: f64) -> String {
    if x == 0.0 {
        return if x.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    let sci = format!("{x:.16e}");
    let (mant, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..17).contains(&exp) {
        let decimals = (16 - exp).max(0) as usize;
        let fixed = format!("{x:.decimals$}");
        trim_fraction(&fixed).to_string()
    } else {
        format!("{}e{}{:02}", trim_fraction(mant), if exp < 0 { '-' } else { '+' }, exp.abs())
    }
}

fn trim_fraction(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

fn write_number(out: &mut String, n: &serde_json::Number) {
    if n.is_i64() || n.is_u64() {
        out.push_str(&n.to_string());
    } else {
        match n.as_f64() {
            Some(x) if x.is_finite() => out.push_str(&fmt_g17(x)),
            _ => out.push_str("null"),
        }
    }
}

fn write_value(out: &mut String, v: &Value, indent: usize, pretty: bool) {
    let nl = |out: &mut String, level: usize| {
        if pretty {
            out.push('\n');
            out.push_str(&"  ".repeat(level));
        }
    };
    match v {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(n) => write_number(out, n),
        Value::String(s) => out.push_str(&serde_json::to_string(s).expect("string serializes")),
        Value::Array(items) => {
            if items.is_empty() {
                out.push_str("[]");
                return;
            }
            out.push('[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                nl(out, indent + 1);
                write_value(out, item, indent + 1, pretty);
            }
            nl(out, indent);
            out.push(']');
        }
        Value::Object(map) => {
            if map.is_empty() {
                out.push_str("{}");
                return;
            }
            out.push('{');
            for (i, (k, item)) in map.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                nl(out, indent + 1);
                let _ = write!(out, "{}:", serde_json::to_string(k).expect("key serializes"));
                if pretty {
                    out.push(' ');
                }
                write_value(out, item, indent + 1, pretty);
            }
            nl(out, indent);
            out.push('}');
        }
    }
}

pub fn to_json(v: &Value, pretty: bool) -> String {
    let mut out = String::new();
    write_value(&mut out, v, 0, pretty);
    out
}

fn flatten(prefix: &str, v: &Value, out: &mut Vec<(String, String)>) {
    let key = |k: &str| if prefix.is_empty() { k.to_string() } else { format!("{prefix}.{k}") };
    match v {
        Value::Object(map) => {
            for (k, item) in map {
                flatten(&key(k), item, out);
            }
        }
        Value::Array(items) => {
            for (i, item) in items.iter().enumerate() {
                flatten(&key(&i.to_string()), item, out);
            }
        }
        Value::Number(n) => {
            let mut s = String::new();
            write_number(&mut s, n);
            out.push((prefix.to_string(), s));
        }
        Value::String(s) => out.push((prefix.to_string(), s.clone())),
        Value::Bool(b) => out.push((prefix.to_string(), b.to_string())),
        Value::Null => out.push((prefix.to_string(), String::new())),
    }
}

/// A payload with a "rows" array becomes one CSV record per row; anything
/// else becomes a single record of flattened fields.
pub fn to_csv(v: &Value) -> Result<String, csv::Error> {
    let rows: Vec<Vec<(String, String)>> = match v.get("rows").and_then(Value::as_array) {
        Some(rows) => rows
            .iter()
            .map(|r| {
                let mut f = Vec::new();
                flatten("", r, &mut f);
                f
            })
            .collect(),
        None => {
            let mut f = Vec::new();
            flatten("", v, &mut f);
            vec![f]
        }
    };
    let mut w = csv::Writer::from_writer(Vec::new());
    if let Some(first) = rows.first() {
        w.write_record(first.iter().map(|(k, _)| k.as_str()))?;
        for r in &rows {
            w.write_record(r.iter().map(|(_, v)| v.as_str()))?;
        }
    }
    let bytes = w.into_inner().map_err(|e| e.into_error())?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn g17_formatting() {
        assert_eq!(fmt_g17(0.5), "0.5");
        assert_eq!(fmt_g17(1.0), "1");
        assert_eq!(fmt_g17(-2.25), "-2.25");
        assert_eq!(fmt_g17(0.1), "0.10000000000000001");
        assert_eq!(fmt_g17(1e-7), "9.9999999999999995e-08");
        assert_eq!(fmt_g17(1e20), "1e+20");
        assert_eq!(fmt_g17(123456.0), "123456");
        for x in [0.553_739_679_7, std::f64::consts::PI, 2.447_902_694_7e-7, 6.02e23] {
            assert_eq!(fmt_g17(x).parse::<f64>().unwrap(), x);
        }
    }

    #[test]
    fn csv_quoting_and_rows() {
        let v = serde_json::json!({"rows": [{"a": 1, "b": "x,y"}, {"a": 2, "b": "z\"q"}]});
        assert_eq!(to_csv(&v).unwrap(), "a,b\n1,\"x,y\"\n2,\"z\"\"q\"\n");
        let v = serde_json::json!({"p": {"mean": 0.5}, "k": 3});
        assert_eq!(to_csv(&v).unwrap(), "k,p.mean\n3,0.5\n");
    }
}

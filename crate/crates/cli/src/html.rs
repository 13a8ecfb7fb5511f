//! Self-contained attention heatmap.

use std::fmt::Write as _;

use serde_json::Value;

pub struct Row<'a> {
    pub id: &'a str,
    pub p: f64,
    pub tokens: Vec<&'a str>,
    pub alphas: Vec<f64>,
}

pub fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&#39;"),
            c => out.push(c),
        }
    }
    out
}

/// Background opacity of each token: α_t / max α, or 0 for an all-zero row.
pub fn opacities(alphas: &[f64]) -> Vec<f64> {
    let max = alphas.iter().copied().fold(0.0, f64::max);
    alphas.iter().map(|&a| if max > 0.0 { a / max } else { 0.0 }).collect()
}

pub fn render(rows: &[Row], meta: &Value) -> String {
    let mut s = String::from(
        "<!DOCTYPE html>\n<html><head><meta charset=\"utf-8\"><title>attention</title></head>\n\
         <body style=\"font-family:sans-serif;line-height:2\">\n",
    );
    // "</" inside the script body would end it early
    let meta = serde_json::to_string(meta).expect("json value serializes").replace("</", "<\\/");
    let _ = writeln!(s, "<script type=\"application/json\" id=\"run-meta\">{meta}</script>");
    for r in rows {
        let _ = write!(
            s,
            "<div class=\"post\" data-id=\"{}\"><span style=\"color:#666\">{} p={:.3}</span> ",
            escape(r.id),
            escape(r.id),
            r.p
        );
        for (tok, op) in r.tokens.iter().zip(opacities(&r.alphas)) {
            let _ = write!(
                s,
                "<span class=\"tok\" style=\"background:rgba(220,30,30,{op:.4})\">{}</span> ",
                escape(tok)
            );
        }
        s.push_str("</div>\n");
    }
    s.push_str("</body></html>\n");
    s
}

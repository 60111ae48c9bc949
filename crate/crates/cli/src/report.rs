//! Static heat reports of per-sentence extraction probabilities.

use std::fmt::Write as _;

use clap::ValueEnum;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ReportFormat {
    Html,
    Text,
}

/// One document with a probability per sentence.
#[derive(Clone, Debug, PartialEq)]
pub struct AttentionDoc {
    pub id: String,
    pub sentences: Vec<Vec<String>>,
    pub scores: Vec<f64>,
}

const BAR_WIDTH: usize = 20;

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Shading is the probability itself, so equal scores shade equally and the
/// most probable sentence is the darkest.
pub fn render_attention(docs: &[AttentionDoc], format: ReportFormat) -> String {
    match format {
        ReportFormat::Html => render_html(docs),
        ReportFormat::Text => render_text(docs),
    }
}

fn render_text(docs: &[AttentionDoc]) -> String {
    let mut out = String::new();
    for d in docs {
        let _ = writeln!(out, "# {}", d.id);
        for (s, &p) in d.sentences.iter().zip(&d.scores) {
            let filled = (p.clamp(0.0, 1.0) * BAR_WIDTH as f64).round() as usize;
            let bar = format!("{}{}", "#".repeat(filled), ".".repeat(BAR_WIDTH - filled));
            let _ = writeln!(out, "{p}\t{bar}\t{}", s.join(" "));
        }
        out.push('\n');
    }
    out
}

fn render_html(docs: &[AttentionDoc]) -> String {
    let mut out = String::from(
        "<!DOCTYPE html>\n<html>\n<head>\n<meta charset=\"utf-8\">\n<title>Sentence scores</title>\n<style>\n\
         body { font-family: sans-serif; max-width: 60em; margin: auto; }\n\
         .s { padding: 0.2em 0.4em; margin: 0.1em 0; }\n\
         .p { font-family: monospace; color: #555; margin-right: 0.6em; }\n</style>\n</head>\n<body>\n",
    );
    for d in docs {
        let _ = writeln!(out, "<section data-doc=\"{}\">\n<h2>{}</h2>", escape(&d.id), escape(&d.id));
        for (s, &p) in d.sentences.iter().zip(&d.scores) {
            let alpha = p.clamp(0.0, 1.0);
            let _ = writeln!(
                out,
                "<div class=\"s\" data-score=\"{p}\" style=\"background: rgba(220, 40, 40, {alpha:.4})\">\
                 <span class=\"p\">{p:.3}</span>{}</div>",
                escape(&s.join(" "))
            );
        }
        out.push_str("</section>\n");
    }
    out.push_str("</body>\n</html>\n");
    out
}

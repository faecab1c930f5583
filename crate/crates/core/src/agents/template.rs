//! Built-in scripts for the deterministic template bot.

pub(crate) const SCRIPTS: &[&[&str]] = &[
    &[
        "hello there, how is your day going?",
        "i have been reading about lighthouses lately.",
        "what do you think about the sea at night?",
        "that is a fair point, tell me more.",
        "i wonder whether we have spoken before.",
        "let us change the subject to something lighter.",
    ],
    &[
        "good morning, shall we talk about the weather?",
        "it has been raining here for three days.",
        "do you prefer rain or sunshine?",
        "i see, that makes sense to me.",
        "the forecast promises a dry weekend.",
    ],
    &[
        "greetings, i am a very small program.",
        "i only know a handful of sentences.",
        "each of them comes back around eventually.",
        "you may notice a pattern soon.",
    ],
];

/// Script lines for a template bot: `lines` (pipe-separated) wins over `script` (an index).
pub(crate) fn resolve(lines: Option<&str>, script: Option<&str>) -> Result<Vec<String>, String> {
    if let Some(raw) = lines {
        let parsed: Vec<String> = raw
            .split('|')
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .map(str::to_string)
            .collect();
        if parsed.is_empty() {
            return Err("template `lines` param has no non-empty line".into());
        }
        if parsed.iter().any(|l| l.contains('\n')) {
            return Err("template lines may not contain newlines".into());
        }
        return Ok(parsed);
    }
    let idx: usize = match script {
        None => 0,
        Some(s) => s
            .parse()
            .map_err(|_| format!("template `script` must be an index, got `{s}`"))?,
    };
    SCRIPTS
        .get(idx)
        .map(|s| s.iter().map(|l| l.to_string()).collect())
        .ok_or_else(|| format!("no built-in script {idx} (have {})", SCRIPTS.len()))
}

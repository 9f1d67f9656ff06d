//! Parameter tables, config files and value resolution.
//!
//! Every setting has a dotted key: `global.seed`, `sim-sat.horizon`, ... A
//! value comes from the command line if given there, else from the config
//! file, else from the table default. The resolved map is echoed into every
//! output so the output itself can be fed back through `--config`.

use std::collections::BTreeMap;
use std::str::FromStr;

use crate::CliError;

/// One parameter of a subcommand.
#[derive(Clone, Copy)]
pub struct Param {
    pub name: &'static str,
    /// `None` marks a parameter with no value unless one is given.
    pub default: Option<&'static str>,
    pub help: &'static str,
}

const fn p(name: &'static str, default: &'static str, help: &'static str) -> Param {
    Param { name, default: Some(default), help }
}

const fn opt(name: &'static str, help: &'static str) -> Param {
    Param { name, default: None, help }
}

pub struct CommandSpec {
    pub name: &'static str,
    pub about: &'static str,
    pub params: &'static [Param],
}

pub const GLOBAL: &[Param] = &[
    p("seed", "1", "base seed of every random stream"),
    p("replicas", "1", "independent replicas"),
    p("format", "jsonl", "output format: jsonl or csv"),
];

const LAW: [Param; 4] = [
    p("law", "exp", "backoff law: exp or poly"),
    p("b", "2", "exponential base"),
    p("i0", "1", "exponential offset"),
    p("alpha", "1", "polynomial exponent"),
];

macro_rules! with_law {
    ($($extra:expr),* $(,)?) => {
        &[LAW[0], LAW[1], LAW[2], LAW[3], $($extra),*]
    };
}

pub const COMMANDS: &[CommandSpec] = &[
    CommandSpec {
        name: "classify",
        about: "Recurrence regime, positive-recurrent ranks and throughput-one flag",
        params: &[p("b", "2", "exponential base"), p("i0", "1", "exponential offset"), p("n", "2", "users")],
    },
    CommandSpec {
        name: "sim-sat",
        about: "Saturated-buffer simulation",
        params: with_law![
            p("n", "2", "users"),
            p("horizon", "1000000", "slots per replica"),
            opt("burn-in", "first slot of the measurement window (default: half the horizon)"),
            opt("start", "initial indices, comma separated (default: all zero)"),
            p("stream", "0", "stream of the first replica"),
            p("histograms", "false", "emit per-user index histograms"),
        ],
    },
    CommandSpec {
        name: "sim-queue",
        about: "Queued simulation with Poisson arrivals",
        params: with_law![
            p("n", "2", "users"),
            p("lambda", "0.1", "total arrival rate per slot"),
            p("horizon", "1000000", "slots per replica"),
            p("stride", "1000", "queue sampling stride"),
            p("stream", "0", "stream of the first replica"),
            p("series", "false", "emit the sampled total queue"),
        ],
    },
    CommandSpec {
        name: "first-success",
        about: "Censored first-success time of the cohort from (0, m, ..., m)",
        params: with_law![
            p("n", "2", "users"),
            p("m", "0", "initial cohort index"),
            p("t-max", "1000000", "censoring horizon"),
            opt("ladder", "horizons for censored means, comma separated (default: t-max)"),
        ],
    },
    CommandSpec {
        name: "return-time",
        about: "Censored time for the rank-r component to return to zero",
        params: with_law![
            p("n", "2", "users"),
            p("r", "1", "component rank, 1-based"),
            p("t-max", "1000000", "censoring horizon"),
            opt("ladder", "horizons for censored means, comma separated (default: t-max)"),
        ],
    },
    CommandSpec {
        name: "bd",
        about: "Stationary law of the auxiliary birth-death chain",
        params: &[
            p("b", "2", "exponential base"),
            p("i0", "0", "exponential offset"),
            p("n", "3", "users"),
            p("x2", "10", "cohort floor in the death rate"),
            opt("delta-star", "lower reflecting level (default: smallest with alpha < 1/2)"),
            p("delta-max", "30", "truncation level"),
            p("steps", "0", "Monte-Carlo steps of the chain itself (0: none)"),
        ],
    },
    CommandSpec {
        name: "dominance",
        about: "Collision traces, their moments, and dominance by the auxiliary chain",
        params: &[
            p("b", "2", "exponential base"),
            p("i0", "0", "exponential offset"),
            p("n", "3", "users"),
            p("x2", "10", "initial cohort index and death-rate floor"),
            p("traces", "2000", "cohort traces"),
            p("max-entries", "200", "collision instants kept per trace"),
            p("max-slots", "1000000000000", "slot budget per trace"),
            p("steps", "10000000", "auxiliary chain steps"),
            p("tolerance", "3", "allowed shortfall in standard errors"),
        ],
    },
    CommandSpec {
        name: "oracle",
        about: "Exact solve of the truncated joint chain",
        params: with_law![
            p("n", "2", "users"),
            p("m-cap", "40", "index cap M"),
            p("solver", "auto", "auto, direct or power"),
            p("tol", "1e-12", "stationary residual tolerance"),
            opt("first-success-m", "also solve the first-success time from (0, m, ..., m)"),
            p("budget", "50000000", "limit on N (M+1)^N"),
        ],
    },
    CommandSpec {
        name: "mg1",
        about: "Standard or modified M/G/1 embedded chain",
        params: &[
            p("service", "det:1", "det:S, geom:MEAN or pmf:s=p,s=p,..."),
            p("lambda", "0.5", "Poisson arrival rate"),
            p("kind", "standard", "standard or modified"),
            p("r0", "100", "first truncation level"),
            p("r-cap", "3200", "largest truncation level"),
        ],
    },
];

pub fn command(name: &str) -> Option<&'static CommandSpec> {
    COMMANDS.iter().find(|c| c.name == name)
}

/// Reads a config source: either `key = value` lines, or an earlier output
/// whose echoed configuration is taken from its `# config:` line or its
/// leading JSON metadata record.
pub fn parse_config_text(text: &str) -> Result<BTreeMap<String, String>, CliError> {
    let mut out = BTreeMap::new();
    let first = text.lines().map(str::trim).find(|l| !l.is_empty() && !l.starts_with("# ebaloha"));
    if let Some(line) = first {
        if let Some(rest) = line.strip_prefix("# config:") {
            for pair in rest.split_whitespace() {
                let (k, v) = pair.split_once('=').ok_or_else(|| CliError::Config(format!("bad config pair '{pair}'")))?;
                out.insert(k.to_string(), v.to_string());
            }
            return Ok(out);
        }
        if line.starts_with('{') {
            let v: serde_json::Value =
                serde_json::from_str(line).map_err(|e| CliError::Config(format!("bad JSON config record: {e}")))?;
            let cfg = v
                .get("config")
                .and_then(|c| c.as_object())
                .filter(|_| v.get("type").and_then(|t| t.as_str()) == Some("config"))
                .ok_or_else(|| CliError::Config("first JSON record is not a config record".into()))?;
            for (k, v) in cfg {
                let s = v.as_str().ok_or_else(|| CliError::Config(format!("config value of '{k}' is not a string")))?;
                out.insert(k.clone(), s.to_string());
            }
            return Ok(out);
        }
    }
    for (no, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) =
            line.split_once('=').ok_or_else(|| CliError::Config(format!("line {}: expected key = value", no + 1)))?;
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() || v.is_empty() {
            return Err(CliError::Config(format!("line {}: empty key or value", no + 1)));
        }
        out.insert(k.to_string(), v.to_string());
    }
    Ok(out)
}

/// Resolved settings of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct Resolved {
    pub command: &'static str,
    values: BTreeMap<String, String>,
}

impl Resolved {
    /// Merges defaults, file values and command-line values (in rising
    /// priority). File keys for other subcommands are ignored; unknown keys
    /// for this one are errors.
    pub fn build(
        spec: &'static CommandSpec,
        file: &BTreeMap<String, String>,
        flags: &BTreeMap<String, String>,
    ) -> Result<Self, CliError> {
        let mut values = BTreeMap::new();
        let sections: [(&str, &[Param]); 2] = [("global", GLOBAL), (spec.name, spec.params)];
        for (section, params) in sections {
            for param in params {
                let key = format!("{section}.{}", param.name);
                let v = flags.get(&key).or_else(|| file.get(&key)).cloned().or(param.default.map(String::from));
                if let Some(v) = v {
                    if v.is_empty() || v.chars().any(char::is_whitespace) {
                        return Err(CliError::Config(format!("value of {key} must be nonempty without spaces")));
                    }
                    values.insert(key, v);
                }
            }
        }
        for key in file.keys() {
            let (section, _) = key.split_once('.').unwrap_or((key, ""));
            if (section == "global" || section == spec.name) && !values.contains_key(key) && !is_optional(spec, key) {
                return Err(CliError::Config(format!("unknown config key '{key}'")));
            }
        }
        Ok(Resolved { command: spec.name, values })
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.values.get(&self.qualify(key)).map(String::as_str)
    }

    fn qualify(&self, key: &str) -> String {
        if GLOBAL.iter().any(|p| p.name == key) {
            format!("global.{key}")
        } else {
            format!("{}.{key}", self.command)
        }
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<T, CliError> {
        self.opt(key)?.ok_or_else(|| CliError::Config(format!("missing value for {}", self.qualify(key))))
    }

    pub fn opt<T: FromStr>(&self, key: &str) -> Result<Option<T>, CliError> {
        match self.raw(key) {
            None => Ok(None),
            Some(s) => s
                .parse()
                .map(Some)
                .map_err(|_| CliError::Config(format!("cannot parse {} = '{s}'", self.qualify(key)))),
        }
    }

    /// Comma-separated list.
    pub fn list<T: FromStr>(&self, key: &str) -> Result<Option<Vec<T>>, CliError> {
        match self.raw(key) {
            None => Ok(None),
            Some(s) => s
                .split(',')
                .map(|x| x.parse().map_err(|_| CliError::Config(format!("cannot parse {} = '{s}'", self.qualify(key)))))
                .collect::<Result<Vec<T>, _>>()
                .map(Some),
        }
    }

    pub fn entries(&self) -> impl Iterator<Item = (&str, &str)> {
        self.values.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }
}

fn is_optional(spec: &CommandSpec, key: &str) -> bool {
    key.strip_prefix(spec.name)
        .and_then(|k| k.strip_prefix('.'))
        .is_some_and(|name| spec.params.iter().any(|p| p.name == name && p.default.is_none()))
}

//! Vega-Lite v5 documents for concrete charts, and the reverse mapping used
//! to read predictions from systems under evaluation.

use serde_json::{json, Map, Value};

use super::{
    AggregateOp, BinUnit, Channel, ChartType, Encoding, Filter, Predicate, SortOrder, SortSpec,
    VisError, VisSpec,
};
use crate::table::DataType;

pub const SCHEMA_URL: &str = "https://vega.github.io/schema/vega-lite/v5.json";

fn mark_name(m: ChartType) -> &'static str {
    match m {
        ChartType::Bar => "bar",
        ChartType::Line => "line",
        ChartType::Pie => "arc",
        ChartType::Scatter => "point",
        ChartType::Heatmap => "rect",
        ChartType::Boxplot => "boxplot",
    }
}

fn type_name(t: DataType) -> &'static str {
    match t {
        DataType::Categorical => "nominal",
        DataType::Quantitative => "quantitative",
        DataType::Temporal => "temporal",
    }
}

fn time_unit(b: BinUnit) -> &'static str {
    match b {
        BinUnit::Year => "year",
        BinUnit::Month => "yearmonth",
    }
}

fn scalar(v: &str) -> Value {
    match v.parse::<f64>() {
        Ok(x) if x.is_finite() => serde_json::Number::from_f64(x)
            .map(|n| {
                if x.fract() == 0.0 && x.abs() < 1e15 {
                    json!(x as i64)
                } else {
                    Value::Number(n)
                }
            })
            .unwrap_or_else(|| json!(v)),
        _ => json!(v),
    }
}

fn filter_json(f: &Filter) -> Value {
    let mut m = Map::new();
    m.insert("field".into(), json!(f.column));
    let (k, v) = match &f.predicate {
        Predicate::OneOf(vals) => ("oneOf", Value::Array(vals.iter().map(|v| scalar(v)).collect())),
        Predicate::Equal(x) => ("equal", scalar(x)),
        Predicate::Gt(x) => ("gt", scalar(x)),
        Predicate::Gte(x) => ("gte", scalar(x)),
        Predicate::Lt(x) => ("lt", scalar(x)),
        Predicate::Lte(x) => ("lte", scalar(x)),
    };
    m.insert(k.into(), v);
    json!({ "filter": Value::Object(m) })
}

/// Which channel carries the sort, and how it is written there.
fn sort_target(spec: &VisSpec, s: SortSpec) -> Option<(Channel, Value)> {
    let host = [Channel::X, Channel::Color]
        .into_iter()
        .find(|c| spec.encodings.contains_key(c))?;
    let v = if host == s.channel {
        json!(s.order.as_str())
    } else {
        let prefix = if s.order == SortOrder::Descending { "-" } else { "" };
        json!(format!("{prefix}{}", s.channel))
    };
    Some((host, v))
}

/// The chart as a Vega-Lite v5 document. Data is referenced by name.
pub fn to_vegalite_value(spec: &VisSpec, data_name: &str) -> Value {
    let sort = spec.sort.and_then(|s| sort_target(spec, s));
    let mut enc = Map::new();
    for (ch, e) in &spec.encodings {
        let mut m = Map::new();
        m.insert("field".into(), json!(e.field));
        m.insert("type".into(), json!(type_name(e.dtype)));
        if let Some(b) = e.bin {
            m.insert("timeUnit".into(), json!(time_unit(b)));
        }
        if let Some(a) = e.aggregate {
            m.insert("aggregate".into(), json!(a.as_str()));
        }
        if let Some((host, v)) = &sort {
            if host == ch {
                m.insert("sort".into(), v.clone());
            }
        }
        enc.insert(ch.as_str().into(), Value::Object(m));
    }
    let mut doc = Map::new();
    doc.insert("$schema".into(), json!(SCHEMA_URL));
    doc.insert("data".into(), json!({ "name": data_name }));
    doc.insert("mark".into(), json!({ "type": mark_name(spec.mark) }));
    doc.insert("encoding".into(), Value::Object(enc));
    if !spec.filters.is_empty() {
        doc.insert(
            "transform".into(),
            Value::Array(spec.filters.iter().map(filter_json).collect()),
        );
    }
    if let Some(t) = spec.task {
        doc.insert("usermeta".into(), json!({ "task": t.as_str() }));
    }
    Value::Object(doc)
}

/// Pretty-printed document text; identical input yields identical bytes.
pub fn to_vegalite(spec: &VisSpec, data_name: &str) -> String {
    serde_json::to_string_pretty(&to_vegalite_value(spec, data_name)).expect("document serializes")
}

fn bad(msg: impl Into<String>) -> VisError {
    VisError::ChartDocument(msg.into())
}

fn text_of(v: &Value) -> Result<String, VisError> {
    match v {
        Value::String(s) => Ok(s.clone()),
        Value::Number(n) => Ok(n.to_string()),
        Value::Bool(b) => Ok(b.to_string()),
        other => Err(bad(format!("unsupported filter value {other}"))),
    }
}

fn parse_filter(v: &Value) -> Result<Filter, VisError> {
    let f = v
        .get("filter")
        .and_then(Value::as_object)
        .ok_or_else(|| bad("transform is not a field filter"))?;
    let column = f
        .get("field")
        .and_then(Value::as_str)
        .ok_or_else(|| bad("filter without field"))?
        .to_string();
    let one = |k: &str| f.get(k).map(text_of).transpose();
    let predicate = if let Some(vals) = f.get("oneOf") {
        let vals = vals.as_array().ok_or_else(|| bad("oneOf must be a list"))?;
        Predicate::OneOf(vals.iter().map(text_of).collect::<Result<_, _>>()?)
    } else if let Some(x) = one("equal")? {
        Predicate::Equal(x)
    } else if let Some(x) = one("gt")? {
        Predicate::Gt(x)
    } else if let Some(x) = one("gte")? {
        Predicate::Gte(x)
    } else if let Some(x) = one("lt")? {
        Predicate::Lt(x)
    } else if let Some(x) = one("lte")? {
        Predicate::Lte(x)
    } else {
        return Err(bad(format!("unsupported predicate on `{column}`")));
    };
    Ok(Filter { column, predicate })
}

fn parse_sort(host: Channel, v: &Value) -> Result<Option<SortSpec>, VisError> {
    let Some(s) = v.as_str() else {
        return Err(bad("only string sorts are understood"));
    };
    let spec = match s {
        "ascending" => SortSpec {
            channel: host,
            order: SortOrder::Ascending,
        },
        "descending" => SortSpec {
            channel: host,
            order: SortOrder::Descending,
        },
        _ => {
            let (order, ch) = match s.strip_prefix('-') {
                Some(rest) => (SortOrder::Descending, rest),
                None => (SortOrder::Ascending, s),
            };
            SortSpec {
                channel: ch.parse()?,
                order,
            }
        }
    };
    Ok(Some(spec))
}

/// Read a chart document back into a spec.
pub fn from_vegalite(doc: &Value) -> Result<VisSpec, VisError> {
    let mark_v = doc.get("mark").ok_or_else(|| bad("no mark"))?;
    let mark_s = match mark_v {
        Value::String(s) => s.as_str(),
        Value::Object(m) => m
            .get("type")
            .and_then(Value::as_str)
            .ok_or_else(|| bad("mark without type"))?,
        _ => return Err(bad("mark must be a string or object")),
    };
    let mark = match mark_s {
        "bar" => ChartType::Bar,
        "line" => ChartType::Line,
        "arc" | "pie" => ChartType::Pie,
        "point" | "circle" | "square" | "scatter" => ChartType::Scatter,
        "rect" | "heatmap" => ChartType::Heatmap,
        "boxplot" => ChartType::Boxplot,
        other => return Err(bad(format!("unsupported mark `{other}`"))),
    };
    let mut spec = VisSpec::new(mark);
    let enc = doc
        .get("encoding")
        .and_then(Value::as_object)
        .ok_or_else(|| bad("no encoding"))?;
    for (name, e) in enc {
        let ch: Channel = name.parse()?;
        let field = e
            .get("field")
            .and_then(Value::as_str)
            .ok_or_else(|| bad(format!("{ch} has no field")))?;
        let dtype = match e.get("type").and_then(Value::as_str) {
            Some("nominal") | Some("ordinal") => DataType::Categorical,
            Some("quantitative") => DataType::Quantitative,
            Some("temporal") => DataType::Temporal,
            other => return Err(bad(format!("{ch} has unsupported type {other:?}"))),
        };
        let mut out = Encoding::new(field, dtype);
        if let Some(u) = e.get("timeUnit") {
            out.bin = Some(match u.as_str() {
                Some("year") => BinUnit::Year,
                Some("yearmonth") | Some("month") => BinUnit::Month,
                _ => return Err(bad(format!("unsupported timeUnit {u}"))),
            });
        }
        if let Some(a) = e.get("aggregate") {
            let a = a.as_str().ok_or_else(|| bad("aggregate must be a string"))?;
            let a: AggregateOp = match a {
                "average" => AggregateOp::Mean,
                other => other.parse()?,
            };
            out.aggregate = Some(a);
        }
        if let Some(s) = e.get("sort") {
            spec.sort = parse_sort(ch, s)?;
        }
        spec.encodings.insert(ch, out);
    }
    if let Some(ts) = doc.get("transform") {
        let ts = ts.as_array().ok_or_else(|| bad("transform must be a list"))?;
        for t in ts {
            spec.filters.push(parse_filter(t)?);
        }
    }
    if let Some(t) = doc.pointer("/usermeta/task").and_then(Value::as_str) {
        spec.task = Some(t.parse()?);
    }
    Ok(spec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vis::{canonicalize, AnalyticTask};

    fn bar() -> VisSpec {
        VisSpec::new(ChartType::Bar)
            .encode(
                Channel::X,
                Encoding::new("Date", DataType::Temporal).binned(BinUnit::Year),
            )
            .encode(
                Channel::Y,
                Encoding::new("Local_Gross", DataType::Quantitative).aggregated(AggregateOp::Mean),
            )
            .filter(Filter::one_of("Genre", &["Comedy", "Action"]))
            .sorted(Channel::Y, SortOrder::Descending)
            .with_task(AnalyticTask::Trend)
    }

    #[test]
    fn bar_document_shape() {
        let v = to_vegalite_value(&bar(), "movies");
        assert_eq!(v["mark"]["type"], "bar");
        assert_eq!(v["encoding"]["x"]["timeUnit"], "year");
        assert_eq!(v["encoding"]["x"]["sort"], "-y");
        assert_eq!(v["transform"][0]["filter"]["oneOf"][1], "Action");
    }

    #[test]
    fn pie_uses_arc() {
        let pie = VisSpec::new(ChartType::Pie)
            .encode(Channel::Color, Encoding::new("Genre", DataType::Categorical))
            .encode(
                Channel::Theta,
                Encoding::new("Budget", DataType::Quantitative).aggregated(AggregateOp::Sum),
            );
        let v = to_vegalite_value(&pie, "movies");
        assert_eq!(v["mark"]["type"], "arc");
        assert!(v["encoding"]["theta"].is_object() && v["encoding"]["color"].is_object());
    }

    #[test]
    fn output_is_stable() {
        assert_eq!(to_vegalite(&bar(), "m"), to_vegalite(&bar(), "m"));
    }

    #[test]
    fn document_round_trips() {
        let v = to_vegalite_value(&bar(), "movies");
        let back = from_vegalite(&v).unwrap();
        assert_eq!(back, bar());
        assert_eq!(canonicalize(&back), canonicalize(&bar()));
    }

    #[test]
    fn unknown_marks_are_rejected() {
        let v = json!({"mark": "trail", "encoding": {}});
        assert!(matches!(from_vegalite(&v), Err(VisError::ChartDocument(_))));
    }
}

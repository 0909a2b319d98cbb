//! Deterministic browser model: a preload scanner over the received HTML
//! prefix, parser-blocking and render-blocking rules, page milestones, and
//! the metrics (Page Load Time and a SpeedIndex proxy) computed from a run's
//! event timeline.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use url::Url;

use crate::archive::ResourceType;
use crate::html;
use crate::netsim::{EventKind, Timeline};

/// How a discovered resource interacts with parsing and rendering.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Blocking {
    /// Stylesheet referenced in the head: blocks first paint.
    RenderBlockingCss,
    /// Script without `async`/`defer`: halts the parser until executed.
    ParserBlockingJs,
    /// `async`/`defer` script: fetched but never blocks.
    Async,
    /// Images and body stylesheets: no blocking effect.
    Passive,
}

/// A subresource found by the preload scanner.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResourceRef {
    pub url: String,
    pub resource_type: ResourceType,
    /// Byte offset of the referencing tag in the document.
    pub discovery_offset: usize,
    pub blocking: Blocking,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BrowserConfig {
    /// Script execution cost charged per body byte once the script arrives.
    pub js_delay_per_byte_ms: f64,
    /// Weight of first visual change in the progress function.
    pub progress_weight: f64,
}

impl Default for BrowserConfig {
    fn default() -> Self {
        BrowserConfig {
            js_delay_per_byte_ms: 0.0,
            progress_weight: 0.5,
        }
    }
}

fn classify(
    tag: &html::Tag,
    head_limit: Option<usize>,
) -> Option<(String, ResourceType, Blocking)> {
    if html::is_stylesheet(tag) {
        let in_head = head_limit.map(|end| tag.start < end).unwrap_or(true);
        let blocking = if in_head {
            Blocking::RenderBlockingCss
        } else {
            Blocking::Passive
        };
        return Some((
            tag.attr("href").unwrap().to_string(),
            ResourceType::Css,
            blocking,
        ));
    }
    if tag.name == "script" && !tag.is_closing {
        let src = tag.attr("src")?;
        let blocking = if tag.has_attr("async") || tag.has_attr("defer") {
            Blocking::Async
        } else {
            Blocking::ParserBlockingJs
        };
        return Some((src.to_string(), ResourceType::Js, blocking));
    }
    if (tag.name == "img" || tag.name == "source") && !tag.is_closing {
        let src = tag.attr("src").or_else(|| tag.attr("srcset"))?;
        return Some((src.to_string(), ResourceType::Image, Blocking::Passive));
    }
    None
}

/// Preload-scan an HTML prefix: every complete resource-bearing tag yields a
/// reference, regardless of where the parser is blocked. Output grows
/// monotonically as the prefix grows.
pub fn scan(html_prefix: &[u8], base_url: &Url) -> Vec<ResourceRef> {
    let tags = html::scan_tags(html_prefix);
    let head_limit = html::head_end(&tags);
    let mut seen = BTreeSet::new();
    let mut refs = Vec::new();
    for tag in &tags {
        if let Some((raw, resource_type, blocking)) = classify(tag, head_limit) {
            let Ok(resolved) = base_url.join(&raw) else {
                continue;
            };
            let url = resolved.to_string();
            if seen.insert(url.clone()) {
                refs.push(ResourceRef {
                    url,
                    resource_type,
                    discovery_offset: tag.start,
                    blocking,
                });
            }
        }
    }
    refs
}

/// A delivery observed by the browser, applied at a simulation time.
#[derive(Debug, Clone, PartialEq)]
pub enum DeliveryEvent {
    Connected,
    PushPromised { url: String },
    Bytes { url: String, data: Vec<u8> },
    StreamComplete { url: String, body_len: u64 },
    Wake,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Milestone {
    FirstVisualChange,
    DomContent,
    OnLoad,
}

impl Milestone {
    pub fn label(self) -> &'static str {
        match self {
            Milestone::FirstVisualChange => "first_visual_change",
            Milestone::DomContent => "dom_content",
            Milestone::OnLoad => "onload",
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct AdvanceOutcome {
    /// Newly discovered, unpromised resources the browser now requests.
    pub requests: Vec<String>,
    /// Milestones that fired at this event's time.
    pub milestones: Vec<Milestone>,
    /// Time the parser unblocks by itself (script execution cost), if any.
    pub wake_at: Option<f64>,
}

/// Parser and loader state for one page load.
#[derive(Debug, Clone)]
pub struct PageState {
    base_url: Url,
    config: BrowserConfig,
    html: Vec<u8>,
    html_complete: bool,
    discovered: Vec<ResourceRef>,
    requested: BTreeSet<String>,
    promised: BTreeSet<String>,
    /// url -> (completion time, body length)
    complete: BTreeMap<String, (f64, u64)>,
    fired: BTreeSet<&'static str>,
}

impl PageState {
    pub fn new(base_url: &str, config: BrowserConfig) -> Result<Self, url::ParseError> {
        Ok(PageState {
            base_url: Url::parse(base_url)?,
            config,
            html: Vec::new(),
            html_complete: false,
            discovered: Vec::new(),
            requested: BTreeSet::new(),
            promised: BTreeSet::new(),
            complete: BTreeMap::new(),
            fired: BTreeSet::new(),
        })
    }

    pub fn discovered(&self) -> &[ResourceRef] {
        &self.discovered
    }

    fn is_base(&self, url: &str) -> bool {
        url == self.base_url.as_str()
    }

    /// Apply one delivery at time `now`.
    pub fn advance(&mut self, now: f64, event: DeliveryEvent) -> AdvanceOutcome {
        match event {
            DeliveryEvent::Connected | DeliveryEvent::Wake => {}
            DeliveryEvent::PushPromised { url } => {
                self.promised.insert(url);
            }
            DeliveryEvent::Bytes { url, data } => {
                if self.is_base(&url) {
                    self.html.extend_from_slice(&data);
                }
            }
            DeliveryEvent::StreamComplete { url, body_len } => {
                if self.is_base(&url) {
                    self.html_complete = true;
                }
                self.complete.entry(url).or_insert((now, body_len));
            }
        }
        self.settle(now)
    }

    fn settle(&mut self, now: f64) -> AdvanceOutcome {
        let mut outcome = AdvanceOutcome::default();

        for found in scan(&self.html, &self.base_url) {
            if self.discovered.iter().any(|r| r.url == found.url) {
                continue;
            }
            if !self.promised.contains(&found.url) && self.requested.insert(found.url.clone()) {
                outcome.requests.push(found.url.clone());
            }
            self.discovered.push(found);
        }

        let (parsed_upto, wake_at) = self.parser_limit(now);
        outcome.wake_at = wake_at;

        let tags = html::scan_tags(&self.html);
        let head_limit = if self.html_complete {
            html::head_end(&tags).unwrap_or(0)
        } else {
            match html::head_end(&tags) {
                Some(end) => end,
                None => usize::MAX,
            }
        };

        let head_css_done = self
            .discovered
            .iter()
            .filter(|r| r.blocking == Blocking::RenderBlockingCss)
            .all(|r| self.complete.contains_key(&r.url));
        if head_css_done && head_limit != usize::MAX && parsed_upto > head_limit {
            self.fire(Milestone::FirstVisualChange, &mut outcome);
        }

        if self.html_complete && parsed_upto == self.html.len() {
            self.fire(Milestone::DomContent, &mut outcome);
            let loaded = self
                .discovered
                .iter()
                .filter(|r| r.blocking != Blocking::Async)
                .all(|r| self.complete.contains_key(&r.url));
            if loaded {
                self.fire(Milestone::OnLoad, &mut outcome);
            }
        }
        outcome
    }

    fn fire(&mut self, milestone: Milestone, outcome: &mut AdvanceOutcome) {
        if self.fired.insert(milestone.label()) {
            outcome.milestones.push(milestone);
        }
    }

    /// How far the parser has advanced: up to the received prefix, or the
    /// first parser-blocking script that cannot execute yet. Returns the
    /// limit and, when the only obstacle is execution cost, the wake time.
    fn parser_limit(&self, now: f64) -> (usize, Option<f64>) {
        let mut wake_at = None;
        for script in self
            .discovered
            .iter()
            .filter(|r| r.blocking == Blocking::ParserBlockingJs)
        {
            // A script may not execute before every earlier stylesheet has
            // been applied.
            let css_ready = self
                .discovered
                .iter()
                .filter(|r| {
                    r.blocking == Blocking::RenderBlockingCss
                        && r.discovery_offset < script.discovery_offset
                })
                .all(|r| self.complete.contains_key(&r.url));
            let ready = match self.complete.get(&script.url) {
                Some(&(done_at, body_len)) if css_ready => {
                    let runnable_at = done_at + body_len as f64 * self.config.js_delay_per_byte_ms;
                    if now + 1e-9 >= runnable_at {
                        true
                    } else {
                        wake_at = Some(runnable_at);
                        false
                    }
                }
                _ => false,
            };
            if !ready {
                return (script.discovery_offset.min(self.html.len()), wake_at);
            }
        }
        (self.html.len(), None)
    }
}

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub connect_end_ms: f64,
    pub first_visual_change_ms: Option<f64>,
    pub dom_content_ms: Option<f64>,
    /// onload relative to connect end.
    pub plt_ms: Option<f64>,
    pub speed_index_ms: Option<f64>,
    pub timed_out: bool,
}

/// Step integral of (1 - progress): `steps` are (time, progress) points,
/// progress holding its previous value until each step time.
pub fn speed_index_from_steps(steps: &[(f64, f64)]) -> f64 {
    let mut si = 0.0;
    let mut prev_t = 0.0;
    let mut progress = 0.0;
    for &(t, p) in steps {
        si += (t - prev_t) * (1.0 - progress);
        prev_t = t;
        progress = p;
    }
    si
}

/// Compute page metrics from a run timeline. Progress at time t is
/// `w * [fvc <= t] + (1 - w) * (above-fold resources complete by t)`; an
/// empty above-fold set degenerates to a completed fraction of one. All
/// times are relative to the base connection's connect end.
pub fn compute_metrics(timeline: &Timeline, above_fold: &[String], w: f64) -> Metrics {
    let connect_end = timeline
        .events
        .iter()
        .find(|e| e.kind == EventKind::ConnectEnd)
        .map(|e| e.time_ms)
        .unwrap_or(0.0);
    let rel = |t: f64| t - connect_end;

    let milestone = |label: &str| {
        timeline
            .events
            .iter()
            .find(|e| e.kind == EventKind::BrowserEvent && e.label.as_deref() == Some(label))
            .map(|e| rel(e.time_ms))
    };
    let fvc = milestone("first_visual_change");
    let dom_content = milestone("dom_content");
    let onload = milestone("onload");

    let fold: BTreeSet<&str> = above_fold.iter().map(String::as_str).collect();
    let mut completions: BTreeMap<&str, f64> = BTreeMap::new();
    for event in &timeline.events {
        if event.kind != EventKind::StreamComplete {
            continue;
        }
        if let Some(url) = event.url.as_deref() {
            if fold.contains(url) {
                completions.entry(url).or_insert(rel(event.time_ms));
            }
        }
    }
    let fold_total = fold.len();
    let fold_incomplete = fold_total - completions.len();

    // Progress step points: fvc contributes w, each above-fold completion
    // contributes its share of (1 - w).
    let mut points: Vec<(f64, f64)> = Vec::new();
    if let Some(t) = fvc {
        points.push((t, w));
    }
    if fold_total > 0 {
        let share = (1.0 - w) / fold_total as f64;
        for &t in completions.values() {
            points.push((t, share));
        }
    } else if let Some(t) = fvc {
        // No manifest: treat content as complete alongside first paint.
        points.push((t, 1.0 - w));
    }
    points.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let mut steps = Vec::with_capacity(points.len());
    let mut progress = 0.0;
    for (t, delta) in points {
        progress += delta;
        steps.push((t, progress));
    }

    let complete = fvc.is_some() && fold_incomplete == 0;
    let timed_out = timeline.timed_out || onload.is_none() || !complete;
    let speed_index = if complete {
        Some(speed_index_from_steps(&steps))
    } else {
        None
    };

    Metrics {
        connect_end_ms: connect_end,
        first_visual_change_ms: fvc,
        dom_content_ms: dom_content,
        plt_ms: onload,
        speed_index_ms: speed_index,
        timed_out,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netsim::TimelineEvent;

    const DOC: &[u8] = b"<html><head>\
<link rel=\"stylesheet\" href=\"/style.css\">\
<script src=\"/app.js\"></script>\
</head><body>\
<img src=\"/hero.png\">\
<link rel=\"stylesheet\" href=\"/late.css\">\
<script src=\"/analytics.js\" async></script>\
</body></html>";

    fn base() -> Url {
        Url::parse("https://site.test/").unwrap()
    }

    #[test]
    fn scan_classifies_blocking() {
        let refs = scan(DOC, &base());
        let get = |suffix: &str| refs.iter().find(|r| r.url.ends_with(suffix)).unwrap();
        assert_eq!(get("style.css").blocking, Blocking::RenderBlockingCss);
        assert_eq!(get("app.js").blocking, Blocking::ParserBlockingJs);
        assert_eq!(get("hero.png").blocking, Blocking::Passive);
        assert_eq!(get("late.css").blocking, Blocking::Passive);
        assert_eq!(get("analytics.js").blocking, Blocking::Async);
    }

    #[test]
    fn scan_is_monotone_over_prefixes() {
        let mut prev = 0;
        for cut in 0..=DOC.len() {
            let refs = scan(&DOC[..cut], &base());
            assert!(refs.len() >= prev, "shrank at {cut}");
            prev = refs.len();
        }
        assert_eq!(prev, 5);
    }

    fn feed_all(state: &mut PageState, now: f64, doc: &[u8]) -> AdvanceOutcome {
        let mut first = state.advance(
            now,
            DeliveryEvent::Bytes {
                url: "https://site.test/".into(),
                data: doc.to_vec(),
            },
        );
        let second = state.advance(
            now,
            DeliveryEvent::StreamComplete {
                url: "https://site.test/".into(),
                body_len: doc.len() as u64,
            },
        );
        first.requests.extend(second.requests);
        first.milestones.extend(second.milestones);
        first.wake_at = second.wake_at.or(first.wake_at);
        first
    }

    #[test]
    fn preload_scanner_requests_past_blocked_parser() {
        let mut state = PageState::new("https://site.test/", BrowserConfig::default()).unwrap();
        let outcome = feed_all(&mut state, 10.0, DOC);
        // Parser is stuck at app.js, but all five resources are requested.
        assert_eq!(outcome.requests.len(), 5);
        assert!(outcome.milestones.is_empty());
    }

    #[test]
    fn promised_resources_are_not_requested() {
        let mut state = PageState::new("https://site.test/", BrowserConfig::default()).unwrap();
        state.advance(
            0.0,
            DeliveryEvent::PushPromised {
                url: "https://site.test/style.css".into(),
            },
        );
        let outcome = feed_all(&mut state, 10.0, DOC);
        assert_eq!(outcome.requests.len(), 4);
        assert!(!outcome.requests.iter().any(|u| u.ends_with("style.css")));
    }

    fn complete(state: &mut PageState, now: f64, url: &str) -> AdvanceOutcome {
        state.advance(
            now,
            DeliveryEvent::StreamComplete {
                url: format!("https://site.test{url}"),
                body_len: 100,
            },
        )
    }

    #[test]
    fn milestones_fire_in_order() {
        let mut state = PageState::new("https://site.test/", BrowserConfig::default()).unwrap();
        feed_all(&mut state, 10.0, DOC);

        // CSS alone: parser still blocked on app.js, no paint yet.
        let o = complete(&mut state, 20.0, "/style.css");
        assert!(o.milestones.is_empty());

        // Script arrives: parser passes the head, first paint.
        let o = complete(&mut state, 30.0, "/app.js");
        assert_eq!(
            o.milestones,
            vec![Milestone::FirstVisualChange, Milestone::DomContent]
        );

        let o = complete(&mut state, 40.0, "/hero.png");
        assert!(o.milestones.is_empty());

        // Async script is not required for onload; late.css is.
        let o = complete(&mut state, 50.0, "/late.css");
        assert_eq!(o.milestones, vec![Milestone::OnLoad]);
    }

    #[test]
    fn script_waits_for_earlier_stylesheet() {
        let mut state = PageState::new("https://site.test/", BrowserConfig::default()).unwrap();
        feed_all(&mut state, 10.0, DOC);
        // Script body is here, but the stylesheet before it is not.
        let o = complete(&mut state, 20.0, "/app.js");
        assert!(o.milestones.is_empty());
        let o = complete(&mut state, 30.0, "/style.css");
        assert!(o.milestones.contains(&Milestone::FirstVisualChange));
    }

    #[test]
    fn js_execution_cost_delays_parsing() {
        let config = BrowserConfig {
            js_delay_per_byte_ms: 0.5,
            ..Default::default()
        };
        let mut state = PageState::new("https://site.test/", config).unwrap();
        feed_all(&mut state, 10.0, DOC);
        complete(&mut state, 20.0, "/style.css");
        // 100-byte script at 0.5 ms/byte finishes executing at 30 + 50.
        let o = complete(&mut state, 30.0, "/app.js");
        assert!(o.milestones.is_empty());
        assert_eq!(o.wake_at, Some(80.0));
        let o = state.advance(80.0, DeliveryEvent::Wake);
        assert!(o.milestones.contains(&Milestone::FirstVisualChange));
    }

    #[test]
    fn plain_page_loads_without_subresources() {
        let mut state = PageState::new("https://site.test/", BrowserConfig::default()).unwrap();
        let o = feed_all(
            &mut state,
            5.0,
            b"<html><head></head><body><p>hi</p></body></html>",
        );
        assert_eq!(
            o.milestones,
            vec![
                Milestone::FirstVisualChange,
                Milestone::DomContent,
                Milestone::OnLoad
            ]
        );
    }

    #[test]
    fn speed_index_step_oracles() {
        assert_eq!(speed_index_from_steps(&[(400.0, 1.0)]), 400.0);
        assert_eq!(speed_index_from_steps(&[(200.0, 0.5), (400.0, 1.0)]), 300.0);
    }

    fn ev(time_ms: f64, kind: EventKind, url: Option<&str>, label: Option<&str>) -> TimelineEvent {
        TimelineEvent {
            time_ms,
            kind,
            stream_id: 0,
            bytes: 0,
            url: url.map(String::from),
            label: label.map(String::from),
        }
    }

    #[test]
    fn metrics_from_timeline() {
        let timeline = Timeline {
            events: vec![
                ev(100.0, EventKind::ConnectEnd, None, None),
                ev(
                    300.0,
                    EventKind::StreamComplete,
                    Some("https://s/a.css"),
                    None,
                ),
                ev(
                    500.0,
                    EventKind::BrowserEvent,
                    None,
                    Some("first_visual_change"),
                ),
                ev(700.0, EventKind::BrowserEvent, None, Some("dom_content")),
                ev(900.0, EventKind::BrowserEvent, None, Some("onload")),
            ],
            timed_out: false,
        };
        let m = compute_metrics(&timeline, &["https://s/a.css".to_string()], 0.5);
        assert_eq!(m.plt_ms, Some(800.0));
        assert_eq!(m.first_visual_change_ms, Some(400.0));
        // progress: 0 until 200 (css, +0.5), 0.5 until 400 (fvc, -> 1.0)
        assert_eq!(m.speed_index_ms, Some(200.0 + 200.0 * 0.5));
        assert!(!m.timed_out);
    }

    #[test]
    fn metrics_without_manifest_track_first_paint() {
        let timeline = Timeline {
            events: vec![
                ev(0.0, EventKind::ConnectEnd, None, None),
                ev(
                    400.0,
                    EventKind::BrowserEvent,
                    None,
                    Some("first_visual_change"),
                ),
                ev(600.0, EventKind::BrowserEvent, None, Some("dom_content")),
                ev(600.0, EventKind::BrowserEvent, None, Some("onload")),
            ],
            timed_out: false,
        };
        let m = compute_metrics(&timeline, &[], 0.5);
        assert_eq!(m.speed_index_ms, Some(400.0));
    }

    #[test]
    fn missing_onload_marks_timeout() {
        let timeline = Timeline {
            events: vec![ev(0.0, EventKind::ConnectEnd, None, None)],
            timed_out: true,
        };
        let m = compute_metrics(&timeline, &[], 0.5);
        assert!(m.timed_out);
        assert_eq!(m.plt_ms, None);
        assert_eq!(m.speed_index_ms, None);
    }
}

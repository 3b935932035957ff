//! A deterministic, seedable mini-classifieds website: catalog state, request
//! handling, an in-process browser backend, scripted demo recordings, and an
//! optional HTTP binding over the same state.
//!
//! Everything a page shows is a pure function of (seed, request history), so
//! replay comparisons across identically-seeded sessions are byte-exact.

mod backend;
mod demos;
mod http;
mod site;

pub use backend::{FixtureBackend, FixtureFactory};
pub use demos::{demo_candidates, demo_name_for_candidate, scripted_demo, DemoError, FixtureTraceSource};
pub use http::{http_request, FixtureServer};
pub use site::{handle_request, PageResponse};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub const BASE_URL: &str = "http://fixture.local";
pub const CATEGORIES: [&str; 3] = ["Boats", "Electronics", "Furniture"];
pub const SORTS: [&str; 3] = ["newest", "price_asc", "price_desc"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comment {
    pub author: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Listing {
    pub id: u32,
    pub title: String,
    pub description: String,
    pub price_cents: i64,
    pub category: String,
    pub color: String,
    /// Logical creation tick; higher is newer. No wall clock anywhere.
    pub created_at: u64,
    pub comments: Vec<Comment>,
}

/// Selector drift injected into form markup. Semantics (catalog, search
/// results, mutations) never change; only how controls are addressed does.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum DriftMode {
    #[default]
    None,
    /// The search box loses its id (renamed); name attribute survives.
    RenamedSearchBox,
    /// The whole search form is rebuilt: new ids, names, types, wrappers.
    FullRewrite,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct FixtureConfig {
    pub drift: DriftMode,
    /// When > 0, the home-page submit button renders only after this many
    /// wait ticks; until then an aria-busy placeholder sits in its place.
    pub lazy_submit_ticks: u32,
    /// Overlay a dismissible promo popup on every page.
    pub popup: bool,
}

#[derive(Debug, Clone)]
pub struct FixtureState {
    pub seed: u64,
    pub config: FixtureConfig,
    pub listings: Vec<Listing>,
    pub next_id: u32,
    pub clock: u64,
    pub popup_dismissed: bool,
    pub wait_ticks: u32,
}

/// Seeded environment constructor; the paired backend is
/// [`FixtureBackend::with_config`].
pub fn seed_env(seed: u64) -> FixtureState {
    seed_env_with(seed, FixtureConfig::default())
}

pub fn seed_env_with(seed: u64, config: FixtureConfig) -> FixtureState {
    let listings = generate_catalog(seed);
    let next_id = listings.len() as u32 + 1;
    let clock = listings.len() as u64 + 1;
    FixtureState {
        seed,
        config,
        listings,
        next_id,
        clock,
        popup_dismissed: false,
        wait_ticks: 0,
    }
}

const ADJECTIVES: [&str; 10] = [
    "Sturdy", "Vintage", "Compact", "Deluxe", "Handmade", "Foldable", "Classic", "Modern",
    "Rugged", "Sleek",
];
const COLORS: [&str; 6] = ["red", "blue", "green", "yellow", "black", "white"];
const BOAT_NOUNS: [&str; 6] = ["kayak", "canoe", "dinghy", "rowboat", "paddleboard", "sailboat"];
const ELECTRONICS_NOUNS: [&str; 6] =
    ["headphones", "speaker", "camera", "monitor", "keyboard", "tablet"];
const FURNITURE_NOUNS: [&str; 6] = ["dresser", "bookshelf", "armchair", "desk", "table", "cabinet"];

/// The catalog is a pure function of the seed: 38 generated listings plus
/// two crafted blue kayaks at guaranteed-distinct prices, 40 in total.
pub fn generate_catalog(seed: u64) -> Vec<Listing> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut listings = Vec::with_capacity(40);
    for i in 1u32..=38 {
        let category = CATEGORIES[(i as usize - 1) % 3];
        let nouns = match category {
            "Boats" => &BOAT_NOUNS,
            "Electronics" => &ELECTRONICS_NOUNS,
            _ => &FURNITURE_NOUNS,
        };
        let adj = ADJECTIVES[rng.gen_range(0..ADJECTIVES.len())];
        let color = COLORS[rng.gen_range(0..COLORS.len())];
        let noun = nouns[rng.gen_range(0..nouns.len())];
        let price_cents = 500 + rng.gen_range(0..99_500);
        listings.push(Listing {
            id: i,
            title: format!("{adj} {color} {noun}"),
            description: format!("A {} {color} {noun} in good condition.", adj.to_lowercase()),
            price_cents,
            category: category.to_string(),
            color: color.to_string(),
            created_at: i as u64,
            comments: Vec::new(),
        });
    }
    // the Fig-1 pair: two blue kayaks in Boats at distinct prices
    let base: i64 = 7_000 + rng.gen_range(0..4_000);
    listings.push(Listing {
        id: 39,
        title: "Blue kayak with paddle".to_string(),
        description: "A blue kayak bundled with a two-piece paddle.".to_string(),
        price_cents: base,
        category: "Boats".to_string(),
        color: "blue".to_string(),
        created_at: 39,
        comments: Vec::new(),
    });
    listings.push(Listing {
        id: 40,
        title: "Blue kayak, lightly used".to_string(),
        description: "A blue kayak stored indoors, lightly used.".to_string(),
        price_cents: base + 1_500,
        category: "Boats".to_string(),
        color: "blue".to_string(),
        created_at: 40,
        comments: Vec::new(),
    });
    listings
}

pub fn format_price(cents: i64) -> String {
    format!("${}.{:02}", cents / 100, (cents % 100).abs())
}

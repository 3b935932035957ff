//! Request handling and page rendering for the fixture classifieds site.
//!
//! Routes: `/`, `/search` (GET: q, category, sort), `/search-nosort` (GET,
//! server ignores sort; the page carries a client-side sort widget),
//! `/listing/{id}`, `/listing/new` (GET form, POST create),
//! `/listing/{id}/edit` (GET form, POST update), `/listing/{id}/delete`
//! (POST), `/listing/{id}/comment` (POST). Mutating routes are non-GET,
//! which is what the promoter's side-effect rule keys on.

use crate::dom::Element;
use crate::urls;

use super::{format_price, DriftMode, FixtureState, Listing, BASE_URL, CATEGORIES, SORTS};

#[derive(Debug, Clone)]
pub struct PageResponse {
    pub status: u16,
    /// Relative redirect target for 302 responses.
    pub redirect: Option<String>,
    pub title: String,
    /// Root `<html>` element of the rendered page.
    pub doc: Element,
}

impl PageResponse {
    fn page(state: &FixtureState, status: u16, title: &str, main_children: Vec<Element>) -> Self {
        PageResponse {
            status,
            redirect: None,
            title: title.to_string(),
            doc: chrome(state, title, main_children),
        }
    }

    fn redirect(target: String) -> Self {
        PageResponse {
            status: 302,
            redirect: Some(target.clone()),
            title: "Redirecting".to_string(),
            doc: Element::new("html").child(
                Element::new("body").child(
                    Element::new("a").attr("href", &target).text("Continue"),
                ),
            ),
        }
    }
}

/// Dispatch one request against the state. `path_query` is the path plus
/// optional query string; `form` carries decoded POST body pairs.
pub fn handle_request(
    state: &mut FixtureState,
    method: &str,
    path_query: &str,
    form: &[(String, String)],
) -> PageResponse {
    let (path, _) = path_query.split_once('?').unwrap_or((path_query, ""));
    let params = urls::query_pairs(path_query);
    let get = |key: &str| -> Option<String> {
        params.iter().find(|(k, _)| k == key).map(|(_, v)| v.clone())
    };
    let form_get = |key: &str| -> Option<String> {
        form.iter().find(|(k, _)| k == key).map(|(_, v)| v.clone())
    };

    let segments: Vec<&str> = path.split('/').filter(|s| !s.is_empty()).collect();
    match (method, segments.as_slice()) {
        ("GET", []) => home(state),
        ("GET", ["search"]) => {
            let q = get("q").or_else(|| get("fr_q")).unwrap_or_default();
            let category = get("category").or_else(|| get("fr_category")).unwrap_or_else(|| "All".to_string());
            let sort = get("sort").or_else(|| get("fr_sort")).unwrap_or_else(|| "newest".to_string());
            search_page(state, &q, &category, &sort, true)
        }
        ("GET", ["search-nosort"]) => {
            let q = get("q").unwrap_or_default();
            let category = get("category").unwrap_or_else(|| "All".to_string());
            // deliberately broken: the sort parameter is accepted and ignored
            let requested_sort = get("sort").unwrap_or_else(|| "newest".to_string());
            nosort_page(state, &q, &category, &requested_sort, false)
        }
        ("GET", ["listing", "new"]) => new_listing_form(state),
        ("POST", ["listing", "new"]) => create_listing(state, &form_get),
        ("GET", ["listing", id]) => match parse_id(state, id) {
            Some(idx) => listing_detail(state, idx),
            None => not_found(state),
        },
        ("GET", ["listing", id, "edit"]) => match parse_id(state, id) {
            Some(idx) => edit_listing_form(state, idx),
            None => not_found(state),
        },
        ("POST", ["listing", id, "edit"]) => match parse_id(state, id) {
            Some(idx) => update_listing(state, idx, &form_get),
            None => not_found(state),
        },
        ("POST", ["listing", id, "delete"]) => match parse_id(state, id) {
            Some(idx) => {
                let removed = state.listings.remove(idx);
                let _ = removed;
                PageResponse::redirect("/".to_string())
            }
            None => not_found(state),
        },
        ("POST", ["listing", id, "comment"]) => match parse_id(state, id) {
            Some(idx) => add_comment(state, idx, &form_get),
            None => not_found(state),
        },
        _ => not_found(state),
    }
}

fn parse_id(state: &FixtureState, raw: &str) -> Option<usize> {
    let id: u32 = raw.parse().ok()?;
    state.listings.iter().position(|l| l.id == id)
}

// ---------------------------------------------------------------------------
// Page assembly
// ---------------------------------------------------------------------------

fn chrome(state: &FixtureState, title: &str, main_children: Vec<Element>) -> Element {
    let mut body = Element::new("body");
    if state.config.popup && !state.popup_dismissed {
        body = body.child(
            Element::new("div")
                .attr("id", "promo-popup")
                .attr("class", "popup")
                .child(Element::new("p").text("Subscribe to our newsletter!"))
                .child(
                    Element::new("button")
                        .attr("id", "popup-close")
                        .attr("data-dismiss", "popup")
                        .text("Close"),
                ),
        );
    }
    body = body.child(
        Element::new("header")
            .child(Element::new("h1").text("Harbor Classifieds"))
            .child(
                Element::new("nav")
                    .child(Element::new("a").attr("href", "/").text("Home"))
                    .child(
                        Element::new("a")
                            .attr("id", "new-listing-link")
                            .attr("href", "/listing/new")
                            .text("+ New listing"),
                    ),
            ),
    );
    body = body.child(Element::new("main").children(main_children));
    Element::new("html")
        .child(Element::new("head").child(Element::new("title").text(title)))
        .child(body)
}

fn option_el(text: &str, selected: bool) -> Element {
    let mut el = Element::new("option").text(text);
    if selected {
        el = el.attr("selected", "");
    }
    el
}

fn select_el(id: &str, name: &str, options: &[&str], current: &str) -> Element {
    let mut sel = Element::new("select").attr("id", id).attr("name", name);
    for opt in options {
        sel = sel.child(option_el(opt, *opt == current));
    }
    sel
}

/// The search form. Markup varies with the drift mode; semantics never do.
fn search_form(state: &FixtureState, q: &str, category: &str, sort: &str) -> Element {
    let categories_all: Vec<&str> = std::iter::once("All").chain(CATEGORIES).collect();
    let mut form = Element::new("form")
        .attr("id", "search-form")
        .attr("action", "/search")
        .attr("method", "get");

    match state.config.drift {
        DriftMode::None | DriftMode::RenamedSearchBox => {
            let mut input = Element::new("input")
                .attr("name", "q")
                .attr("type", "text")
                .attr("placeholder", "Search listings...")
                .attr("required", "")
                .attr("value", q);
            input = match state.config.drift {
                DriftMode::RenamedSearchBox => input.attr("id", "finder-q"),
                _ => input.attr("id", "searchquery"),
            };
            form = form
                .child(input)
                .child(select_el("category-filter", "category", &categories_all, category))
                .child(select_el("sort-order", "sort", SORTS.as_ref(), sort));
            if state.config.lazy_submit_ticks > state.wait_ticks {
                form = form.child(
                    Element::new("div")
                        .attr("class", "lazy-pending")
                        .attr("aria-busy", "true")
                        .text("Loading search controls..."),
                );
            } else {
                form = form.child(
                    Element::new("button")
                        .attr("id", "search-submit")
                        .attr("type", "submit")
                        .text("Search"),
                );
            }
        }
        DriftMode::FullRewrite => {
            form = form
                .child(
                    Element::new("div").attr("class", "control").child(
                        Element::new("input")
                            .attr("id", "fr-query")
                            .attr("name", "fr_q")
                            .attr("type", "search")
                            .attr("placeholder", "Find items...")
                            .attr("value", q),
                    ),
                )
                .child(
                    Element::new("div").attr("class", "control").child(select_el(
                        "fr-category",
                        "fr_category",
                        &categories_all,
                        category,
                    )),
                )
                .child(
                    Element::new("div").attr("class", "control").child(select_el(
                        "fr-sort",
                        "fr_sort",
                        SORTS.as_ref(),
                        sort,
                    )),
                )
                .child(
                    Element::new("div").attr("class", "control").child(
                        Element::new("button")
                            .attr("id", "fr-submit")
                            .attr("type", "submit")
                            .text("Go"),
                    ),
                );
        }
    }
    form
}

fn listing_card(listing: &Listing) -> Element {
    Element::new("article")
        .attr("class", "listing-card")
        .attr("data-listing-id", &listing.id.to_string())
        .child(
            Element::new("a")
                .attr("href", &format!("/listing/{}", listing.id))
                .text(&listing.title),
        )
        .child(Element::new("span").attr("class", "price").text(&format_price(listing.price_cents)))
        .child(Element::new("span").attr("class", "category").text(&listing.category))
        .child(Element::new("span").attr("class", "color").text(&listing.color))
}

fn results_block(matches: &[&Listing]) -> Vec<Element> {
    let heading = Element::new("h2").text(&format!(
        "{} result{}",
        matches.len(),
        if matches.len() == 1 { "" } else { "s" }
    ));
    let mut results = Element::new("div").attr("id", "results");
    for listing in matches {
        results = results.child(listing_card(listing));
    }
    vec![heading, results]
}

fn home(state: &FixtureState) -> PageResponse {
    let mut newest: Vec<&Listing> = state.listings.iter().collect();
    newest.sort_by(|a, b| b.created_at.cmp(&a.created_at).then(b.id.cmp(&a.id)));
    newest.truncate(6);
    let mut latest = Element::new("div").attr("id", "latest");
    for l in &newest {
        latest = latest.child(listing_card(l));
    }
    PageResponse::page(
        state,
        200,
        "Harbor Classifieds",
        vec![
            search_form(state, "", "All", "newest"),
            Element::new("h2").text("Latest listings"),
            latest,
        ],
    )
}

fn filter_and_sort<'a>(
    state: &'a FixtureState,
    q: &str,
    category: &str,
    sort: Option<&str>,
) -> Vec<&'a Listing> {
    let needle = q.to_lowercase();
    let mut matches: Vec<&Listing> = state
        .listings
        .iter()
        .filter(|l| {
            (needle.is_empty()
                || l.title.to_lowercase().contains(&needle)
                || l.description.to_lowercase().contains(&needle))
                && (category == "All" || l.category == category)
        })
        .collect();
    match sort.unwrap_or("newest") {
        "price_asc" => matches.sort_by(|a, b| a.price_cents.cmp(&b.price_cents).then(a.id.cmp(&b.id))),
        "price_desc" => matches.sort_by(|a, b| b.price_cents.cmp(&a.price_cents).then(a.id.cmp(&b.id))),
        _ => matches.sort_by(|a, b| b.created_at.cmp(&a.created_at).then(b.id.cmp(&a.id))),
    }
    matches
}

fn bad_request(state: &FixtureState, field: &str, message: &str) -> PageResponse {
    PageResponse::page(
        state,
        400,
        "400 Bad Request",
        vec![
            Element::new("h2").text("400 Bad Request"),
            Element::new("div")
                .attr("class", "field-error")
                .attr("data-field", field)
                .text(message),
        ],
    )
}

fn validate_search_params(
    state: &FixtureState,
    category: &str,
    sort: &str,
) -> Option<PageResponse> {
    if category != "All" && !CATEGORIES.contains(&category) {
        return Some(bad_request(
            state,
            "category",
            &format!("Unknown category: {category}"),
        ));
    }
    if !SORTS.contains(&sort) {
        return Some(bad_request(state, "sort", &format!("Unknown sort: {sort}")));
    }
    None
}

fn search_page(
    state: &FixtureState,
    q: &str,
    category: &str,
    sort: &str,
    honor_sort: bool,
) -> PageResponse {
    if let Some(err) = validate_search_params(state, category, sort) {
        return err;
    }
    let applied = if honor_sort { Some(sort) } else { None };
    let matches = filter_and_sort(state, q, category, applied);
    let mut main = vec![search_form(state, q, category, sort)];
    main.extend(results_block(&matches));
    PageResponse::page(state, 200, &format!("Search: {q}"), main)
}

/// The nosort results page. The server never sorts here; the standalone
/// `client-sort` select is re-ordered client-side by the backend, which is
/// exactly the behavior a URL navigation cannot reproduce.
pub(super) fn nosort_page(
    state: &FixtureState,
    q: &str,
    category: &str,
    sort_shown: &str,
    client_sorted: bool,
) -> PageResponse {
    if let Some(err) = validate_search_params(state, category, sort_shown) {
        return err;
    }
    let applied = if client_sorted { Some(sort_shown) } else { None };
    let matches = filter_and_sort(state, q, category, applied);
    let mut main = vec![
        Element::new("h2").text(&format!("Browsing: {q}")),
        Element::new("label").attr("for", "nosort-sort").text("Sort displayed results"),
        select_el("nosort-sort", "sort", SORTS.as_ref(), sort_shown)
            .attr("class", "client-sort"),
    ];
    main.extend(results_block(&matches));
    PageResponse::page(state, 200, &format!("Browse: {q}"), main)
}

fn listing_detail(state: &FixtureState, idx: usize) -> PageResponse {
    let listing = &state.listings[idx];
    let mut comments_list = Element::new("ul").attr("id", "comment-list");
    for c in &listing.comments {
        comments_list = comments_list.child(
            Element::new("li")
                .attr("class", "comment")
                .text(&format!("{}: {}", c.author, c.text)),
        );
    }
    let detail = Element::new("article")
        .attr("id", "listing-detail")
        .attr("data-listing-id", &listing.id.to_string())
        .child(Element::new("h2").text(&listing.title))
        .child(Element::new("p").attr("class", "price").text(&format_price(listing.price_cents)))
        .child(Element::new("p").attr("class", "category").text(&listing.category))
        .child(Element::new("p").attr("class", "color").text(&listing.color))
        .child(Element::new("p").attr("class", "description").text(&listing.description));
    let comment_form = Element::new("form")
        .attr("id", "comment-form")
        .attr("action", &format!("/listing/{}/comment", listing.id))
        .attr("method", "post")
        .child(
            Element::new("textarea")
                .attr("id", "comment-text")
                .attr("name", "text")
                .attr("required", ""),
        )
        .child(
            Element::new("button")
                .attr("id", "comment-submit")
                .attr("type", "submit")
                .text("Post comment"),
        );
    let delete_form = Element::new("form")
        .attr("id", "delete-form")
        .attr("action", &format!("/listing/{}/delete", listing.id))
        .attr("method", "post")
        .child(
            Element::new("button")
                .attr("id", "delete-submit")
                .attr("type", "submit")
                .text("Delete listing"),
        );
    PageResponse::page(
        state,
        200,
        &listing.title.clone(),
        vec![
            detail,
            Element::new("p").child(
                Element::new("a")
                    .attr("id", "edit-link")
                    .attr("href", &format!("/listing/{}/edit", listing.id))
                    .text("Edit this listing"),
            ),
            Element::new("section")
                .attr("id", "comments")
                .child(Element::new("h2").text("Comments"))
                .child(comments_list)
                .child(comment_form),
            delete_form,
        ],
    )
}

fn new_listing_form(state: &FixtureState) -> PageResponse {
    let form = Element::new("form")
        .attr("id", "new-listing-form")
        .attr("action", "/listing/new")
        .attr("method", "post")
        .child(Element::new("label").attr("for", "title-input").text("Title"))
        .child(
            Element::new("input")
                .attr("id", "title-input")
                .attr("name", "title")
                .attr("type", "text")
                .attr("required", "")
                .attr("value", ""),
        )
        .child(Element::new("label").attr("for", "description-input").text("Description"))
        .child(
            Element::new("textarea")
                .attr("id", "description-input")
                .attr("name", "description"),
        )
        .child(Element::new("label").attr("for", "price-input").text("Price (dollars)"))
        .child(
            Element::new("input")
                .attr("id", "price-input")
                .attr("name", "price")
                .attr("type", "number")
                .attr("required", "")
                .attr("value", ""),
        )
        .child(Element::new("label").attr("for", "category-input").text("Category"))
        .child(select_el("category-input", "category", CATEGORIES.as_ref(), "Boats"))
        .child(Element::new("label").attr("for", "color-input").text("Color"))
        .child(
            Element::new("input")
                .attr("id", "color-input")
                .attr("name", "color")
                .attr("type", "text")
                .attr("value", ""),
        )
        .child(
            Element::new("button")
                .attr("id", "create-submit")
                .attr("type", "submit")
                .text("Create listing"),
        );
    PageResponse::page(state, 200, "New listing", vec![Element::new("h2").text("Create a listing"), form])
}

#[allow(clippy::result_large_err)]
fn validate_listing_form(
    state: &FixtureState,
    form_get: &dyn Fn(&str) -> Option<String>,
) -> Result<(String, String, i64, String, String), PageResponse> {
    let title = form_get("title").unwrap_or_default();
    if title.trim().is_empty() {
        return Err(bad_request(state, "title", "title is required"));
    }
    let price_raw = form_get("price").unwrap_or_default();
    let price: i64 = match price_raw.parse() {
        Ok(p) if p > 0 => p,
        _ => {
            return Err(bad_request(
                state,
                "price",
                &format!("price must be a positive whole number, got `{price_raw}`"),
            ))
        }
    };
    let category = form_get("category").unwrap_or_default();
    if !CATEGORIES.contains(&category.as_str()) {
        return Err(bad_request(
            state,
            "category",
            &format!("Unknown category: {category}"),
        ));
    }
    Ok((
        title,
        form_get("description").unwrap_or_default(),
        price,
        category,
        form_get("color").unwrap_or_default(),
    ))
}

fn create_listing(
    state: &mut FixtureState,
    form_get: &dyn Fn(&str) -> Option<String>,
) -> PageResponse {
    let (title, description, price, category, color) =
        match validate_listing_form(state, form_get) {
            Ok(v) => v,
            Err(resp) => return resp,
        };
    let id = state.next_id;
    state.next_id += 1;
    let created_at = state.clock;
    state.clock += 1;
    state.listings.push(Listing {
        id,
        title,
        description,
        price_cents: price * 100,
        category,
        color,
        created_at,
        comments: Vec::new(),
    });
    PageResponse::redirect(format!("/listing/{id}"))
}

fn edit_listing_form(state: &FixtureState, idx: usize) -> PageResponse {
    let listing = &state.listings[idx];
    let form = Element::new("form")
        .attr("id", "edit-form")
        .attr("action", &format!("/listing/{}/edit", listing.id))
        .attr("method", "post")
        .child(Element::new("label").attr("for", "edit-title").text("Title"))
        .child(
            Element::new("input")
                .attr("id", "edit-title")
                .attr("name", "title")
                .attr("type", "text")
                .attr("required", "")
                .attr("value", &listing.title),
        )
        .child(Element::new("label").attr("for", "edit-description").text("Description"))
        .child(
            Element::new("textarea")
                .attr("id", "edit-description")
                .attr("name", "description")
                .text(&listing.description),
        )
        .child(Element::new("label").attr("for", "edit-price").text("Price (dollars)"))
        .child(
            Element::new("input")
                .attr("id", "edit-price")
                .attr("name", "price")
                .attr("type", "number")
                .attr("required", "")
                .attr("value", &(listing.price_cents / 100).to_string()),
        )
        .child(Element::new("label").attr("for", "edit-category").text("Category"))
        .child(select_el("edit-category", "category", CATEGORIES.as_ref(), &listing.category))
        .child(
            Element::new("button")
                .attr("id", "edit-submit")
                .attr("type", "submit")
                .text("Save changes"),
        );
    PageResponse::page(
        state,
        200,
        &format!("Edit: {}", listing.title),
        vec![Element::new("h2").text("Edit listing"), form],
    )
}

fn update_listing(
    state: &mut FixtureState,
    idx: usize,
    form_get: &dyn Fn(&str) -> Option<String>,
) -> PageResponse {
    let (title, description, price, category, color) =
        match validate_listing_form(state, form_get) {
            Ok(v) => v,
            Err(resp) => return resp,
        };
    let listing = &mut state.listings[idx];
    listing.title = title;
    listing.description = description;
    listing.price_cents = price * 100;
    listing.category = category;
    if !color.is_empty() {
        listing.color = color;
    }
    PageResponse::redirect(format!("/listing/{}", listing.id))
}

fn add_comment(
    state: &mut FixtureState,
    idx: usize,
    form_get: &dyn Fn(&str) -> Option<String>,
) -> PageResponse {
    let text = form_get("text").unwrap_or_default();
    if text.trim().is_empty() {
        return bad_request(state, "text", "text is required");
    }
    let listing = &mut state.listings[idx];
    listing.comments.push(super::Comment {
        author: "demo_user".to_string(),
        text,
    });
    PageResponse::redirect(format!("/listing/{}", listing.id))
}

fn not_found(state: &FixtureState) -> PageResponse {
    PageResponse::page(
        state,
        404,
        "404 Not Found",
        vec![
            Element::new("h2").text("404 Not Found"),
            Element::new("p").text("The page you asked for does not exist."),
        ],
    )
}

/// Absolute URL for a relative fixture path.
pub fn absolute(path: &str) -> String {
    format!("{BASE_URL}{path}")
}

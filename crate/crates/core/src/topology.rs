//! Static network description: links, users and the routing incidence.
//!
//! Links and users are kept sorted by id so every iteration over them is
//! deterministic. Routes are stored as link indices; `incidence[l]` holds the
//! indices of the users whose route contains link `l`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use thiserror::Error;

/// Capacity of every link in the built-in scenarios.
pub const BUILTIN_CAPACITY: f64 = 10.0;
/// Minimum processing rate of every link in the built-in scenarios.
pub const BUILTIN_MIN_RATE: f64 = 1.0;
/// Server processing delay of every link in the built-in scenarios.
pub const BUILTIN_SERV_DELAY: f64 = 0.5;
/// Upper rate bound of every user in the built-in scenarios.
pub const BUILTIN_X_MAX: f64 = 10.0;
/// Minimum bandwidth requirement of every user in the built-in scenarios.
pub const BUILTIN_X_MIN: f64 = 0.5;
/// Buffer size (packets) of every user in the built-in scenarios.
pub const BUILTIN_BUFFER: f64 = 10.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TopologyError {
    #[error("duplicate link id `{0}`")]
    DuplicateLink(String),
    #[error("duplicate user id `{0}`")]
    DuplicateUser(String),
    #[error("user `{0}` has an empty route")]
    EmptyRoute(String),
    #[error("user `{user}` references unknown link `{link}`")]
    UnknownLink { user: String, link: String },
    #[error("user `{user}` visits link `{link}` more than once")]
    RepeatedLink { user: String, link: String },
    #[error("invalid link `{id}`: {reason}")]
    InvalidLink { id: String, reason: &'static str },
    #[error("invalid user `{id}`: {reason}")]
    InvalidUser { id: String, reason: &'static str },
    #[error("expected {expected} rates, got {got}")]
    RateCount { expected: usize, got: usize },
    #[error("rate of user `{user}` must be a finite value >= 0, got {rate}")]
    InvalidRate { user: String, rate: f64 },
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("unknown built-in scenario `{0}` (expected single-link or parking-lot)")]
    UnknownScenario(String),
    #[error("cannot read topology file {path}: {msg}")]
    Io { path: String, msg: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Link {
    pub id: String,
    pub capacity: f64,
    /// Minimum rate needed to process a notification packet on this link.
    pub min_rate: f64,
    pub serv_delay: f64,
    pub propagation_delay: f64,
}

impl Link {
    pub fn new(id: impl Into<String>, capacity: f64, min_rate: f64, serv_delay: f64) -> Self {
        Link {
            id: id.into(),
            capacity,
            min_rate,
            serv_delay,
            propagation_delay: 0.0,
        }
    }

    pub fn with_propagation_delay(mut self, delay: f64) -> Self {
        self.propagation_delay = delay;
        self
    }

    fn validate(&self) -> Result<(), TopologyError> {
        let fail = |reason| {
            Err(TopologyError::InvalidLink {
                id: self.id.clone(),
                reason,
            })
        };
        if !(self.capacity.is_finite() && self.capacity > 0.0) {
            return fail("capacity must be > 0");
        }
        if !(self.min_rate > 0.0 && self.min_rate <= self.capacity) {
            return fail("min_rate must satisfy 0 < min_rate <= capacity");
        }
        if !(self.serv_delay.is_finite() && self.serv_delay >= 0.0) {
            return fail("serv_delay must be >= 0");
        }
        if !(self.propagation_delay.is_finite() && self.propagation_delay >= 0.0) {
            return fail("prop_delay must be >= 0");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct User {
    pub id: String,
    /// Ordered link ids from the source side to the user.
    pub route: Vec<String>,
    pub x_max: f64,
    /// Minimum bandwidth requirement.
    pub x_min: f64,
    /// Buffer size in packets.
    pub buffer: f64,
}

impl User {
    pub fn new<S: Into<String>>(
        id: impl Into<String>,
        route: impl IntoIterator<Item = S>,
        x_max: f64,
        x_min: f64,
        buffer: f64,
    ) -> Self {
        User {
            id: id.into(),
            route: route.into_iter().map(Into::into).collect(),
            x_max,
            x_min,
            buffer,
        }
    }

    fn validate(&self) -> Result<(), TopologyError> {
        let fail = |reason| {
            Err(TopologyError::InvalidUser {
                id: self.id.clone(),
                reason,
            })
        };
        if self.route.is_empty() {
            return Err(TopologyError::EmptyRoute(self.id.clone()));
        }
        if !(self.x_max.is_finite() && self.x_min > 0.0 && self.x_min <= self.x_max) {
            return fail("rate bounds must satisfy 0 < x_min <= x_max");
        }
        if !(self.buffer.is_finite() && self.buffer > 0.0) {
            return fail("buffer must be > 0");
        }
        Ok(())
    }
}

/// Immutable network: links and users sorted by id plus the routing incidence.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    links: Vec<Link>,
    users: Vec<User>,
    routes: Vec<Vec<usize>>,
    incidence: Vec<Vec<usize>>,
}

impl Network {
    pub fn build(links: Vec<Link>, users: Vec<User>) -> Result<Network, TopologyError> {
        let mut links = links;
        let mut users = users;
        links.sort_by(|a, b| a.id.cmp(&b.id));
        users.sort_by(|a, b| a.id.cmp(&b.id));

        for pair in links.windows(2) {
            if pair[0].id == pair[1].id {
                return Err(TopologyError::DuplicateLink(pair[0].id.clone()));
            }
        }
        for pair in users.windows(2) {
            if pair[0].id == pair[1].id {
                return Err(TopologyError::DuplicateUser(pair[0].id.clone()));
            }
        }
        for link in &links {
            link.validate()?;
        }

        let index: BTreeMap<&str, usize> = links
            .iter()
            .enumerate()
            .map(|(i, l)| (l.id.as_str(), i))
            .collect();

        let mut routes = Vec::with_capacity(users.len());
        let mut incidence = vec![Vec::new(); links.len()];
        for (u, user) in users.iter().enumerate() {
            user.validate()?;
            let mut seen = BTreeSet::new();
            let mut route = Vec::with_capacity(user.route.len());
            for link_id in &user.route {
                let &l = index
                    .get(link_id.as_str())
                    .ok_or_else(|| TopologyError::UnknownLink {
                        user: user.id.clone(),
                        link: link_id.clone(),
                    })?;
                if !seen.insert(l) {
                    return Err(TopologyError::RepeatedLink {
                        user: user.id.clone(),
                        link: link_id.clone(),
                    });
                }
                route.push(l);
                incidence[l].push(u);
            }
            routes.push(route);
        }

        Ok(Network {
            links,
            users,
            routes,
            incidence,
        })
    }

    /// One link of capacity 10 shared by three users.
    pub fn single_link() -> Network {
        let links = vec![Link::new(
            "L0",
            BUILTIN_CAPACITY,
            BUILTIN_MIN_RATE,
            BUILTIN_SERV_DELAY,
        )];
        let users = (0..3).map(|i| builtin_user(i, ["L0"])).collect();
        Network::build(links, users).expect("built-in topology is valid")
    }

    /// Chain A-B-C-D with users 1, 2 and 3 hops away from D.
    pub fn parking_lot() -> Network {
        let links = ["AB", "BC", "CD"]
            .into_iter()
            .map(|id| Link::new(id, BUILTIN_CAPACITY, BUILTIN_MIN_RATE, BUILTIN_SERV_DELAY))
            .collect();
        let users = vec![
            builtin_user(0, vec!["CD"]),
            builtin_user(1, vec!["BC", "CD"]),
            builtin_user(2, vec!["AB", "BC", "CD"]),
        ];
        Network::build(links, users).expect("built-in topology is valid")
    }

    pub fn builtin(name: &str) -> Result<Network, TopologyError> {
        match name {
            "single-link" => Ok(Network::single_link()),
            "parking-lot" => Ok(Network::parking_lot()),
            other => Err(TopologyError::UnknownScenario(other.to_string())),
        }
    }

    pub fn from_file(path: &Path) -> Result<Network, TopologyError> {
        let text = std::fs::read_to_string(path).map_err(|e| TopologyError::Io {
            path: path.display().to_string(),
            msg: e.to_string(),
        })?;
        text.parse()
    }

    pub fn links(&self) -> &[Link] {
        &self.links
    }

    pub fn users(&self) -> &[User] {
        &self.users
    }

    pub fn link_index(&self, id: &str) -> Option<usize> {
        self.links.binary_search_by(|l| l.id.as_str().cmp(id)).ok()
    }

    pub fn user_index(&self, id: &str) -> Option<usize> {
        self.users.binary_search_by(|u| u.id.as_str().cmp(id)).ok()
    }

    /// Link indices along the route of user `u`.
    pub fn route(&self, u: usize) -> &[usize] {
        &self.routes[u]
    }

    /// Users traversing link `l`, S(l).
    pub fn users_of(&self, l: usize) -> &[usize] {
        &self.incidence[l]
    }

    /// The link on the user's route shared by the most users; ties go to the
    /// link that comes later on the route (closer to the user).
    pub fn bottleneck_link(&self, u: usize) -> usize {
        let mut best = self.routes[u][0];
        for &l in &self.routes[u] {
            if self.incidence[l].len() >= self.incidence[best].len() {
                best = l;
            }
        }
        best
    }

    /// Per-link aggregate flow `A x`.
    pub fn aggregate_flow(&self, rates: &[f64]) -> Result<Vec<f64>, TopologyError> {
        if rates.len() != self.users.len() {
            return Err(TopologyError::RateCount {
                expected: self.users.len(),
                got: rates.len(),
            });
        }
        for (user, &rate) in self.users.iter().zip(rates) {
            if !(rate.is_finite() && rate >= 0.0) {
                return Err(TopologyError::InvalidRate {
                    user: user.id.clone(),
                    rate,
                });
            }
        }
        Ok(self
            .incidence
            .iter()
            .map(|users| users.iter().map(|&u| rates[u]).sum())
            .collect())
    }

    /// Sum of link prices along the route of user `u`.
    pub fn path_price(&self, link_prices: &[f64], u: usize) -> f64 {
        self.routes[u].iter().map(|&l| link_prices[l]).sum()
    }
}

fn builtin_user<S: Into<String>>(i: usize, route: impl IntoIterator<Item = S>) -> User {
    User::new(
        i.to_string(),
        route,
        BUILTIN_X_MAX,
        BUILTIN_X_MIN,
        BUILTIN_BUFFER,
    )
}

impl FromStr for Network {
    type Err = TopologyError;

    /// Parses the line-oriented topology format:
    ///
    /// ```text
    /// link <id> capacity <f> min_rate <f> serv_delay <f> prop_delay <f>
    /// user <id> route <id,id,...> x_max <f> x_min <f> buffer <f>
    /// ```
    fn from_str(text: &str) -> Result<Network, TopologyError> {
        let mut links = Vec::new();
        let mut users = Vec::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let lineno = n + 1;
            let err = |msg: String| TopologyError::Parse { line: lineno, msg };
            let tokens: Vec<&str> = line.split_whitespace().collect();
            let (kind, id) = match tokens.as_slice() {
                [kind, id, ..] => (*kind, *id),
                _ => return Err(err(format!("incomplete declaration `{line}`"))),
            };
            let rest = &tokens[2..];
            if !rest.len().is_multiple_of(2) {
                return Err(err("expected `key value` pairs after the id".into()));
            }
            let mut fields: BTreeMap<&str, &str> = BTreeMap::new();
            for kv in rest.chunks(2) {
                if fields.insert(kv[0], kv[1]).is_some() {
                    return Err(err(format!("key `{}` given twice", kv[0])));
                }
            }
            let take =
                |fields: &mut BTreeMap<&str, &str>, key: &str| -> Result<String, TopologyError> {
                    fields
                        .remove(key)
                        .map(str::to_string)
                        .ok_or_else(|| err(format!("missing `{key}`")))
                };
            let number =
                |fields: &mut BTreeMap<&str, &str>, key: &str| -> Result<f64, TopologyError> {
                    let value = take(fields, key)?;
                    value
                        .parse::<f64>()
                        .map_err(|_| err(format!("`{key}` is not a number: `{value}`")))
                };
            match kind {
                "link" => {
                    let capacity = number(&mut fields, "capacity")?;
                    let min_rate = number(&mut fields, "min_rate")?;
                    let serv_delay = number(&mut fields, "serv_delay")?;
                    let prop = number(&mut fields, "prop_delay")?;
                    links.push(
                        Link::new(id, capacity, min_rate, serv_delay).with_propagation_delay(prop),
                    );
                }
                "user" => {
                    let route = take(&mut fields, "route")?
                        .split(',')
                        .filter(|s| !s.is_empty())
                        .map(str::to_string)
                        .collect::<Vec<_>>();
                    let x_max = number(&mut fields, "x_max")?;
                    let x_min = number(&mut fields, "x_min")?;
                    let buffer = number(&mut fields, "buffer")?;
                    users.push(User::new(id, route, x_max, x_min, buffer));
                }
                other => return Err(err(format!("unknown declaration `{other}`"))),
            }
            if let Some(key) = fields.keys().next() {
                return Err(TopologyError::Parse {
                    line: lineno,
                    msg: format!("unknown key `{key}`"),
                });
            }
        }
        Network::build(links, users)
    }
}

impl fmt::Display for Network {
    /// Renders the network in the topology file format.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for l in &self.links {
            writeln!(
                f,
                "link {} capacity {} min_rate {} serv_delay {} prop_delay {}",
                l.id, l.capacity, l.min_rate, l.serv_delay, l.propagation_delay
            )?;
        }
        for u in &self.users {
            writeln!(
                f,
                "user {} route {} x_max {} x_min {} buffer {}",
                u.id,
                u.route.join(","),
                u.x_max,
                u.x_min,
                u.buffer
            )?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ids(net: &Network, l: usize) -> Vec<&str> {
        net.users_of(l)
            .iter()
            .map(|&u| net.users()[u].id.as_str())
            .collect()
    }

    #[test]
    fn parking_lot_routes() {
        let net = Network::parking_lot();
        let cd = net.link_index("CD").unwrap();
        let bc = net.link_index("BC").unwrap();
        let ab = net.link_index("AB").unwrap();
        assert_eq!(net.users()[0].route, vec!["CD"]);
        assert_eq!(net.users()[1].route, vec!["BC", "CD"]);
        assert_eq!(net.users()[2].route, vec!["AB", "BC", "CD"]);
        assert_eq!(ids(&net, cd), vec!["0", "1", "2"]);
        assert_eq!(ids(&net, bc), vec!["1", "2"]);
        assert_eq!(ids(&net, ab), vec!["2"]);
        for u in 0..3 {
            assert_eq!(net.bottleneck_link(u), cd);
        }
    }

    #[test]
    fn single_link_incidence() {
        let net = Network::single_link();
        assert_eq!(ids(&net, 0), vec!["0", "1", "2"]);
    }

    #[test]
    fn unknown_link_rejected() {
        let links = vec![Link::new("L0", 10.0, 1.0, 0.0)];
        let users = vec![User::new("u", ["L1"], 10.0, 1.0, 5.0)];
        assert_eq!(
            Network::build(links, users),
            Err(TopologyError::UnknownLink {
                user: "u".into(),
                link: "L1".into()
            })
        );
    }

    #[test]
    fn structural_errors() {
        let l = || Link::new("L0", 10.0, 1.0, 0.0);
        let u = |id: &str, route: Vec<&str>| User::new(id, route, 10.0, 1.0, 5.0);
        assert_eq!(
            Network::build(vec![l(), l()], vec![]),
            Err(TopologyError::DuplicateLink("L0".into()))
        );
        assert_eq!(
            Network::build(vec![l()], vec![u("a", vec!["L0"]), u("a", vec!["L0"])]),
            Err(TopologyError::DuplicateUser("a".into()))
        );
        assert_eq!(
            Network::build(vec![l()], vec![u("a", vec![])]),
            Err(TopologyError::EmptyRoute("a".into()))
        );
        assert!(matches!(
            Network::build(vec![l()], vec![u("a", vec!["L0", "L0"])]),
            Err(TopologyError::RepeatedLink { .. })
        ));
        assert!(matches!(
            Network::build(vec![Link::new("L0", 10.0, 11.0, 0.0)], vec![]),
            Err(TopologyError::InvalidLink { .. })
        ));
        assert!(matches!(
            Network::build(vec![l()], vec![User::new("a", ["L0"], 1.0, 2.0, 5.0)]),
            Err(TopologyError::InvalidUser { .. })
        ));
    }

    #[test]
    fn aggregate_flow_examples() {
        let net = Network::parking_lot();
        let flow = net.aggregate_flow(&[10.0, 10.0, 10.0]).unwrap();
        assert_eq!(flow, vec![10.0, 20.0, 30.0]);
        assert_eq!(net.aggregate_flow(&[0.0; 3]).unwrap(), vec![0.0; 3]);
        let single = Network::single_link();
        assert_eq!(single.aggregate_flow(&[10.0; 3]).unwrap(), vec![30.0]);
        assert!(matches!(
            net.aggregate_flow(&[1.0, 2.0]),
            Err(TopologyError::RateCount { .. })
        ));
        assert!(matches!(
            net.aggregate_flow(&[1.0, -2.0, 0.0]),
            Err(TopologyError::InvalidRate { .. })
        ));
    }

    #[test]
    fn path_price_examples() {
        let net = Network::parking_lot();
        let prices = [0.0, 0.2, 0.1];
        assert!((net.path_price(&prices, 2) - 0.3).abs() < 1e-12);
        assert!((net.path_price(&prices, 0) - 0.1).abs() < 1e-12);
        for u in 0..3 {
            assert_eq!(net.path_price(&[0.0; 3], u), 0.0);
        }
    }

    #[test]
    fn parse_file_format() {
        let text = "\
# two-hop chain
link X capacity 5 min_rate 0.5 serv_delay 0.1 prop_delay 0.01
link Y capacity 8 min_rate 1 serv_delay 0 prop_delay 0

user a route X,Y x_max 10 x_min 1 buffer 20
user b route Y x_max 4 x_min 0.5 buffer 5
";
        let net: Network = text.parse().unwrap();
        assert_eq!(net.links().len(), 2);
        assert_eq!(net.links()[0].propagation_delay, 0.01);
        assert_eq!(net.users()[0].route, vec!["X", "Y"]);
        assert_eq!(net.users_of(1), &[0, 1]);

        let reparsed: Network = net.to_string().parse().unwrap();
        assert_eq!(reparsed, net);
    }

    #[test]
    fn parse_errors() {
        let missing = "link X capacity 5 min_rate 1 serv_delay 0";
        assert!(matches!(
            missing.parse::<Network>(),
            Err(TopologyError::Parse { line: 1, .. })
        ));
        let bad_kind = "router X";
        assert!(matches!(
            bad_kind.parse::<Network>(),
            Err(TopologyError::Parse { .. })
        ));
        let unknown = "link X capacity 5 min_rate 1 serv_delay 0 prop_delay 0\nuser a route Z x_max 1 x_min 1 buffer 1";
        assert!(matches!(
            unknown.parse::<Network>(),
            Err(TopologyError::UnknownLink { .. })
        ));
        assert!(matches!(
            Network::builtin("ring"),
            Err(TopologyError::UnknownScenario(_))
        ));
    }

    proptest! {
        #[test]
        fn aggregate_flow_is_linear(
            rates in proptest::collection::vec(0.0f64..20.0, 3),
            c in 0.0f64..10.0,
        ) {
            let net = Network::parking_lot();
            let base = net.aggregate_flow(&rates).unwrap();
            let scaled: Vec<f64> = rates.iter().map(|r| r * c).collect();
            let flow = net.aggregate_flow(&scaled).unwrap();
            for (a, b) in flow.iter().zip(&base) {
                prop_assert!((a - c * b).abs() <= 1e-9 * (1.0 + a.abs()));
            }
        }

        #[test]
        fn path_price_is_route_sum(prices in proptest::collection::vec(0.0f64..5.0, 3)) {
            let net = Network::parking_lot();
            // user 2 route = AB ++ (user 1 route) and user 1 route = BC ++ (user 0 route)
            let p0 = net.path_price(&prices, 0);
            let p1 = net.path_price(&prices, 1);
            let p2 = net.path_price(&prices, 2);
            prop_assert!((p1 - (prices[1] + p0)).abs() < 1e-12);
            prop_assert!((p2 - (prices[0] + p1)).abs() < 1e-12);
        }

        #[test]
        fn incidence_matches_routes(mask in proptest::collection::vec(1u8..8, 1..6)) {
            let links: Vec<Link> = ["a", "b", "c"].iter().map(|id| Link::new(*id, 10.0, 1.0, 0.0)).collect();
            let users: Vec<User> = mask.iter().enumerate().map(|(i, m)| {
                let route: Vec<&str> = ["a", "b", "c"].iter().enumerate()
                    .filter(|(bit, _)| m & (1 << bit) != 0).map(|(_, id)| *id).collect();
                User::new(format!("u{i}"), route, 10.0, 1.0, 1.0)
            }).collect();
            let net = Network::build(links, users).unwrap();
            for u in 0..net.users().len() {
                for l in 0..net.links().len() {
                    let on_route = net.route(u).contains(&l);
                    prop_assert_eq!(on_route, net.users_of(l).contains(&u));
                }
            }
        }
    }
}

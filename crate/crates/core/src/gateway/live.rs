use super::{measure_repeated, GatewayError, Measurement, PlanSource, Query, RunOutcome};
use crate::hint_catalog::HintSet;
use postgres::error::SqlState;
use postgres::{Client, NoTls};
use serde::{Deserialize, Serialize};
use std::time::Instant;

/// Connection and measurement settings. The password is never stored here;
/// it is read from the environment variable named by `password_env`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DbConfig {
    pub host: String,
    pub port: u16,
    pub database: String,
    pub user: String,
    pub password_env: String,
    pub timeout_ms: u64,
    pub repetitions: u32,
    pub reset_statement: String,
}

impl Default for DbConfig {
    fn default() -> Self {
        DbConfig {
            host: "localhost".into(),
            port: 5432,
            database: "postgres".into(),
            user: "postgres".into(),
            password_env: "PGPASSWORD".into(),
            timeout_ms: 300_000,
            repetitions: 1,
            reset_statement: "RESET ALL".into(),
        }
    }
}

impl DbConfig {
    pub fn validate(&self) -> Result<(), GatewayError> {
        if self.timeout_ms == 0 {
            return Err(GatewayError::InvalidConfig("timeout_ms must be positive".into()));
        }
        if self.repetitions == 0 {
            return Err(GatewayError::InvalidConfig("repetitions must be at least 1".into()));
        }
        Ok(())
    }
}

fn classify(e: postgres::Error) -> GatewayError {
    if e.is_closed() {
        return GatewayError::Connection(e.to_string());
    }
    match e.as_db_error() {
        Some(db) => GatewayError::Sql(db.message().to_string()),
        None => GatewayError::Connection(e.to_string()),
    }
}

/// Live PostgreSQL source over a single connection.
pub struct PgSource {
    client: Client,
    config: DbConfig,
}

impl PgSource {
    pub fn connect(config: DbConfig) -> Result<Self, GatewayError> {
        config.validate()?;
        let mut pg = postgres::Config::new();
        pg.host(&config.host).port(config.port).dbname(&config.database).user(&config.user);
        if let Ok(pw) = std::env::var(&config.password_env) {
            pg.password(pw);
        }
        let client = pg.connect(NoTls).map_err(|e| GatewayError::Connection(e.to_string()))?;
        Ok(PgSource { client, config })
    }

    fn apply(&mut self, hint: &HintSet) -> Result<(), GatewayError> {
        let stmts = hint.to_set_statements().join("; ");
        self.client.batch_execute(&stmts).map_err(classify)
    }

    fn reset(&mut self) -> Result<(), GatewayError> {
        let reset = self.config.reset_statement.clone();
        self.client.batch_execute(&reset).map_err(classify)
    }

    fn hinted<T>(
        &mut self,
        hint: &HintSet,
        body: impl FnOnce(&mut Self) -> Result<T, GatewayError>,
    ) -> Result<T, GatewayError> {
        self.apply(hint)?;
        let out = body(self);
        let reset = self.reset();
        let v = out?;
        reset?;
        Ok(v)
    }
}

impl PlanSource for PgSource {
    fn plan_for(&mut self, q: &Query, hint: &HintSet) -> Result<String, GatewayError> {
        self.hinted(hint, |s| {
            let row = s.client.query_one(format!("EXPLAIN (FORMAT JSON) {}", q.sql).as_str(), &[]).map_err(classify)?;
            let doc: serde_json::Value = row.try_get(0).map_err(classify)?;
            Ok(doc.to_string())
        })
    }

    fn measure(&mut self, q: &Query, hint: &HintSet) -> Result<Measurement, GatewayError> {
        let (reps, timeout) = (self.config.repetitions, self.config.timeout_ms);
        self.hinted(hint, |s| {
            s.client.batch_execute(&format!("SET statement_timeout = {timeout}")).map_err(classify)?;
            measure_repeated(reps, timeout, || {
                let start = Instant::now();
                match s.client.simple_query(&q.sql) {
                    Ok(_) => Ok(RunOutcome::Completed(start.elapsed())),
                    Err(e) if e.code() == Some(&SqlState::QUERY_CANCELED) => Ok(RunOutcome::TimedOut),
                    Err(e) => Err(classify(e)),
                }
            })
        })
    }
}

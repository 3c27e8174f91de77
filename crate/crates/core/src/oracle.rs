use crate::error::Result;
use crate::slate::Slate;

/// Anything that can score a slate by its expected number of positive
/// responses: the analytic simulator or a distilled response model.
pub trait ClickOracle: Sync {
    fn n(&self) -> usize;
    fn k(&self) -> usize;
    /// Number of distinct users, 0 when the oracle is not personalized.
    fn num_users(&self) -> usize;
    fn expected_clicks(&self, slate: &Slate, user: Option<usize>) -> Result<f64>;

    fn expected_clicks_batch(&self, slates: &[Slate], users: &[Option<usize>]) -> Result<Vec<f64>> {
        slates
            .iter()
            .zip(users)
            .map(|(s, &u)| self.expected_clicks(s, u))
            .collect()
    }
}

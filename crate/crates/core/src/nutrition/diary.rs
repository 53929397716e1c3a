use std::collections::BTreeMap;

use chrono::{DateTime, Days, NaiveDate, Utc};
use serde::{Deserialize, Serialize};

use super::bmr::{compute_goal, BmrFormula, CalorieGoal, UserProfile};
use super::table::{estimate_meal_calories, CalorieTable};
use super::NutritionError;
use crate::detect::{detections_to_counts, DetectionSet, DishCounts};

/// Longest history range served in one call, in days.
pub const MAX_HISTORY_DAYS: u64 = 3660;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Band {
    Green,
    Yellow,
    Orange,
    Red,
}

/// Lower edges of the yellow, orange and red bands as fractions of the goal.
/// Each band is closed below and open above.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandThresholds {
    pub yellow: f64,
    pub orange: f64,
    pub red: f64,
}

impl Default for BandThresholds {
    fn default() -> Self {
        Self {
            yellow: 0.5,
            orange: 0.75,
            red: 1.0,
        }
    }
}

impl BandThresholds {
    pub fn new(yellow: f64, orange: f64, red: f64) -> Result<Self, NutritionError> {
        let t = Self {
            yellow,
            orange,
            red,
        };
        let ok = [yellow, orange, red].iter().all(|v| v.is_finite())
            && 0.0 < yellow
            && yellow <= orange
            && orange <= red;
        if ok {
            Ok(t)
        } else {
            Err(NutritionError::InvalidBands)
        }
    }

    pub fn band(&self, fraction: f64) -> Band {
        if fraction >= self.red {
            Band::Red
        } else if fraction >= self.orange {
            Band::Orange
        } else if fraction >= self.yellow {
            Band::Yellow
        } else {
            Band::Green
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum MealSource {
    Manual,
    Detection { file_id: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MealLog {
    pub meal_id: u64,
    pub user_id: String,
    pub timestamp: DateTime<Utc>,
    pub counts: DishCounts,
    pub kcal: f64,
    pub source: MealSource,
}

#[derive(Debug, Clone, PartialEq)]
pub enum MealInput {
    Counts(DishCounts),
    /// Detections are reduced to counts at the given confidence threshold.
    Detections {
        set: DetectionSet,
        confidence_threshold: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackerState {
    pub user_id: String,
    pub date: NaiveDate,
    pub consumed: f64,
    pub goal: f64,
    pub fraction: f64,
    pub band: Band,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DayEntry {
    pub date: NaiveDate,
    pub consumed: f64,
    pub goal: f64,
    pub fraction: f64,
    pub band: Band,
    pub meals: Vec<MealLog>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserRecord {
    pub user_id: String,
    pub profile: UserProfile,
    pub goal: Option<CalorieGoal>,
    /// In logging order.
    pub meals: Vec<MealLog>,
}

/// A state change. Applying the same events in the same order always
/// rebuilds the same diary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload", rename_all = "snake_case")]
pub enum DiaryEvent {
    UserCreated {
        user_id: String,
        profile: UserProfile,
    },
    GoalSet {
        user_id: String,
        goal: CalorieGoal,
    },
    MealLogged(MealLog),
}

impl DiaryEvent {
    pub fn kind(&self) -> &'static str {
        match self {
            Self::UserCreated { .. } => "user_created",
            Self::GoalSet { .. } => "goal_set",
            Self::MealLogged(_) => "meal_logged",
        }
    }

    pub fn user_id(&self) -> &str {
        match self {
            Self::UserCreated { user_id, .. } | Self::GoalSet { user_id, .. } => user_id,
            Self::MealLogged(meal) => &meal.user_id,
        }
    }
}

/// Serializable diary contents, without configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiarySnapshot {
    pub users: Vec<UserRecord>,
    pub next_meal_id: u64,
}

/// Users, goals and meal logs.
///
/// Mutations come in two steps: a `prepare_*` call validates a request
/// against the current state and returns the event to record, and
/// [`Diary::apply`] commits it. Callers that persist events write them in
/// between.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Diary {
    users: BTreeMap<String, UserRecord>,
    next_meal_id: u64,
    bands: BandThresholds,
}

impl Diary {
    pub fn new(bands: BandThresholds) -> Self {
        Self {
            bands,
            ..Self::default()
        }
    }

    pub fn restore(snapshot: DiarySnapshot, bands: BandThresholds) -> Self {
        Self {
            users: snapshot
                .users
                .into_iter()
                .map(|u| (u.user_id.clone(), u))
                .collect(),
            next_meal_id: snapshot.next_meal_id,
            bands,
        }
    }

    pub fn snapshot(&self) -> DiarySnapshot {
        DiarySnapshot {
            users: self.users.values().cloned().collect(),
            next_meal_id: self.next_meal_id,
        }
    }

    pub fn bands(&self) -> &BandThresholds {
        &self.bands
    }

    pub fn user(&self, user_id: &str) -> Result<&UserRecord, NutritionError> {
        self.users
            .get(user_id)
            .ok_or_else(|| NutritionError::UnknownUser(user_id.to_owned()))
    }

    pub fn users(&self) -> impl Iterator<Item = &UserRecord> {
        self.users.values()
    }

    pub fn prepare_user(
        &self,
        user_id: &str,
        profile: &UserProfile,
    ) -> Result<DiaryEvent, NutritionError> {
        profile.validate()?;
        if self.users.contains_key(user_id) {
            return Err(NutritionError::DuplicateUser(user_id.to_owned()));
        }
        Ok(DiaryEvent::UserCreated {
            user_id: user_id.to_owned(),
            profile: profile.clone(),
        })
    }

    /// Uses the profile's own formula when none is given.
    pub fn prepare_goal(
        &self,
        user_id: &str,
        formula: Option<BmrFormula>,
    ) -> Result<DiaryEvent, NutritionError> {
        let user = self.user(user_id)?;
        let goal = compute_goal(&user.profile, formula.unwrap_or(user.profile.formula))?;
        Ok(DiaryEvent::GoalSet {
            user_id: user_id.to_owned(),
            goal,
        })
    }

    pub fn prepare_meal(
        &self,
        user_id: &str,
        input: &MealInput,
        table: &CalorieTable,
        timestamp: DateTime<Utc>,
    ) -> Result<DiaryEvent, NutritionError> {
        self.user(user_id)?;
        let (counts, source) = match input {
            MealInput::Counts(counts) => {
                if let Some((&id, _)) = counts.iter().find(|(_, &n)| n == 0) {
                    return Err(NutritionError::ZeroCount(id));
                }
                (counts.clone(), MealSource::Manual)
            }
            MealInput::Detections {
                set,
                confidence_threshold,
            } => {
                if !(0.0..=1.0).contains(confidence_threshold) {
                    return Err(NutritionError::InvalidThreshold(*confidence_threshold));
                }
                let source = MealSource::Detection {
                    file_id: set.image_id.clone(),
                };
                (detections_to_counts(set, *confidence_threshold), source)
            }
        };
        if counts.is_empty() {
            return Err(NutritionError::EmptyMeal);
        }
        let kcal = estimate_meal_calories(&counts, table)?;
        Ok(DiaryEvent::MealLogged(MealLog {
            meal_id: self.next_meal_id,
            user_id: user_id.to_owned(),
            timestamp,
            counts,
            kcal,
            source,
        }))
    }

    pub fn apply(&mut self, event: DiaryEvent) -> Result<(), NutritionError> {
        match event {
            DiaryEvent::UserCreated { user_id, profile } => {
                if self.users.contains_key(&user_id) {
                    return Err(NutritionError::DuplicateUser(user_id));
                }
                self.users.insert(
                    user_id.clone(),
                    UserRecord {
                        user_id,
                        profile,
                        goal: None,
                        meals: Vec::new(),
                    },
                );
            }
            DiaryEvent::GoalSet { user_id, goal } => {
                self.user_mut(&user_id)?.goal = Some(goal);
            }
            DiaryEvent::MealLogged(meal) => {
                let next = meal.meal_id + 1;
                self.user_mut(&meal.user_id)?.meals.push(meal);
                self.next_meal_id = self.next_meal_id.max(next);
            }
        }
        Ok(())
    }

    fn user_mut(&mut self, user_id: &str) -> Result<&mut UserRecord, NutritionError> {
        self.users
            .get_mut(user_id)
            .ok_or_else(|| NutritionError::UnknownUser(user_id.to_owned()))
    }

    pub fn create_user(
        &mut self,
        user_id: &str,
        profile: &UserProfile,
    ) -> Result<(), NutritionError> {
        let event = self.prepare_user(user_id, profile)?;
        self.apply(event)
    }

    pub fn set_goal(
        &mut self,
        user_id: &str,
        formula: Option<BmrFormula>,
    ) -> Result<CalorieGoal, NutritionError> {
        let event = self.prepare_goal(user_id, formula)?;
        let DiaryEvent::GoalSet { goal, .. } = event else {
            unreachable!()
        };
        self.apply(event)?;
        Ok(goal)
    }

    pub fn log_meal(
        &mut self,
        user_id: &str,
        input: &MealInput,
        table: &CalorieTable,
        timestamp: DateTime<Utc>,
    ) -> Result<MealLog, NutritionError> {
        let event = self.prepare_meal(user_id, input, table, timestamp)?;
        let DiaryEvent::MealLogged(meal) = &event else {
            unreachable!()
        };
        let meal = meal.clone();
        self.apply(event)?;
        Ok(meal)
    }

    /// Today's intake in the user's timezone as of `now`.
    pub fn tracker_state(
        &self,
        user_id: &str,
        now: DateTime<Utc>,
    ) -> Result<TrackerState, NutritionError> {
        let user = self.user(user_id)?;
        let goal = goal_of(user)?;
        let date = now.with_timezone(&user.profile.timezone).date_naive();
        let consumed = canonical_sum(
            user.meals
                .iter()
                .filter(|m| local_date(user, m) == date)
                .map(|m| m.kcal),
        );
        let fraction = consumed / goal;
        Ok(TrackerState {
            user_id: user_id.to_owned(),
            date,
            consumed,
            goal,
            fraction,
            band: self.bands.band(fraction),
        })
    }

    /// One entry per local date in `from..=to`, oldest first, against the current goal.
    pub fn history(
        &self,
        user_id: &str,
        from: NaiveDate,
        to: NaiveDate,
    ) -> Result<Vec<DayEntry>, NutritionError> {
        if to < from {
            return Err(NutritionError::InvalidRange { from, to });
        }
        let days = (to - from).num_days() as u64 + 1;
        if days > MAX_HISTORY_DAYS {
            return Err(NutritionError::RangeTooLong(days));
        }
        let user = self.user(user_id)?;
        let goal = goal_of(user)?;
        let mut by_day: BTreeMap<NaiveDate, Vec<&MealLog>> = BTreeMap::new();
        for meal in &user.meals {
            let date = local_date(user, meal);
            if (from..=to).contains(&date) {
                by_day.entry(date).or_default().push(meal);
            }
        }
        Ok((0..days)
            .map(|i| {
                let date = from + Days::new(i);
                let mut meals: Vec<MealLog> = by_day
                    .remove(&date)
                    .unwrap_or_default()
                    .into_iter()
                    .cloned()
                    .collect();
                meals.sort_by_key(|m| (m.timestamp, m.meal_id));
                let consumed = canonical_sum(meals.iter().map(|m| m.kcal));
                let fraction = consumed / goal;
                DayEntry {
                    date,
                    consumed,
                    goal,
                    fraction,
                    band: self.bands.band(fraction),
                    meals,
                }
            })
            .collect())
    }
}

fn goal_of(user: &UserRecord) -> Result<f64, NutritionError> {
    user.goal
        .map(|g| g.goal)
        .ok_or_else(|| NutritionError::NoGoal(user.user_id.clone()))
}

fn local_date(user: &UserRecord, meal: &MealLog) -> NaiveDate {
    meal.timestamp
        .with_timezone(&user.profile.timezone)
        .date_naive()
}

/// Sums in sorted order so the result does not depend on logging order.
fn canonical_sum(values: impl Iterator<Item = f64>) -> f64 {
    let mut v: Vec<f64> = values.collect();
    v.sort_by(f64::total_cmp);
    v.into_iter().sum()
}

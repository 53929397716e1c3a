//! Energy goals, per-dish calorie estimates and the daily intake tracker.

mod bmr;
mod diary;
mod table;

use chrono::NaiveDate;
pub use chrono_tz::Tz;
use thiserror::Error;

pub use bmr::{compute_bmr, compute_goal, Activity, BmrFormula, CalorieGoal, Sex, UserProfile};
pub use diary::{
    Band, BandThresholds, DayEntry, Diary, DiaryEvent, DiarySnapshot, MealInput, MealLog,
    MealSource, TrackerState, UserRecord, MAX_HISTORY_DAYS,
};
pub use table::{estimate_meal_calories, CalorieTable, Dish};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NutritionError {
    #[error("invalid profile: {0}")]
    InvalidProfile(&'static str),
    #[error("formula yields a non-positive BMR ({0:.2} kcal/day) for this profile")]
    NonPositiveBmr(f64),
    #[error("dish {class_id}: kcal {kcal} must be positive and finite")]
    InvalidCalories { class_id: usize, kcal: f64 },
    #[error("dish {0} listed twice in the calorie table")]
    DuplicateDish(usize),
    #[error("calorie table: {0}")]
    Table(String),
    #[error("no calorie entry for dish {0}")]
    MissingDishCalories(usize),
    #[error("unknown user {0:?}")]
    UnknownUser(String),
    #[error("user {0:?} already exists")]
    DuplicateUser(String),
    #[error("meal has no dishes")]
    EmptyMeal,
    #[error("dish {0} has count 0")]
    ZeroCount(usize),
    #[error("user {0:?} has no calorie goal")]
    NoGoal(String),
    #[error("range end {to} precedes start {from}")]
    InvalidRange { from: NaiveDate, to: NaiveDate },
    #[error("range of {0} days exceeds the limit")]
    RangeTooLong(u64),
    #[error("band thresholds must satisfy 0 < yellow <= orange <= red")]
    InvalidBands,
    #[error("confidence threshold {0} outside [0, 1]")]
    InvalidThreshold(f64),
}

impl NutritionError {
    /// Stable machine-readable identifier.
    pub fn code(&self) -> &'static str {
        match self {
            Self::InvalidProfile(_) => "invalid_profile",
            Self::NonPositiveBmr(_) => "non_positive_bmr",
            Self::InvalidCalories { .. } => "invalid_calories",
            Self::DuplicateDish(_) => "duplicate_dish",
            Self::Table(_) => "invalid_calorie_table",
            Self::MissingDishCalories(_) => "missing_dish_calories",
            Self::UnknownUser(_) => "unknown_user",
            Self::DuplicateUser(_) => "duplicate_user",
            Self::EmptyMeal => "empty_meal",
            Self::ZeroCount(_) => "zero_count",
            Self::NoGoal(_) => "no_goal",
            Self::InvalidRange { .. } => "invalid_range",
            Self::RangeTooLong(_) => "range_too_long",
            Self::InvalidBands => "invalid_bands",
            Self::InvalidThreshold(_) => "invalid_threshold",
        }
    }
}
